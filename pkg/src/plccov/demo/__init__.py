"""Demo depalletizer project shipped with the package."""
