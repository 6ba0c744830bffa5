#! /usr/bin/env python3
"""Generate, verify and spectrally analyse ensembles of discrete time self-similar processes.

    Dtsssi.py generate --config config/gaussian_type2.yaml
    Dtsssi.py verify --config config/gaussian_type2.yaml --strict
    Dtsssi.py spectral --config config/gaussian_type2.yaml --set spectral.M_max=4
    Dtsssi.py report --config config/gaussian_type2.yaml
"""
import sys

from dtsssi.cli import main


if __name__ == '__main__':
    sys.exit(main())
