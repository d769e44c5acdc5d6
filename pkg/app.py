# app.py
import sys


def main() -> int:
    from cli.pcbsample import main as cli_main

    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    raise SystemExit(main())
