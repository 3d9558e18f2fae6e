"""
Entry point for running pertubox as a module.

Usage:
    python -m pertubox perturb --technique rotate --input a.csv --schema s.json --output b.csv
"""

from pertubox.cli import main

if __name__ == "__main__":
    main()
