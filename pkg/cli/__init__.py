# cli package (pcbsample command line and plotting scripts)
__all__ = []
