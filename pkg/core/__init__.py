# core package: sampling library (geometry, grid, sampling, losses, stats, io, bench)
__all__ = []
