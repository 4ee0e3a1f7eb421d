"""
Main entry point for the biprism experiment toolkit
"""
import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
