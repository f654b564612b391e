"""Simulator and calibration toolkit for thermally tuned microring
photonic neural networks.

Subpackage map:

- ``optics``       closed-form microring and coupler physics
- ``thermal``      heater drive to resonance-shift mapping with crosstalk
- ``electronics``  balanced photodiode readout and amplifier chain
- ``devices``      simulated filter banks, cascades, splitters, OSA spectra
- ``analysis``     trough detection, background removal, filter shapes
- ``calibration``  basic and cascaded calibration engines
- ``training``     2-3-1 network backpropagation and the device sweep
- ``mdm``          interferometer and intermodal-mixing analysis
- ``cli``          command-line entry points
"""

__version__ = "0.1.0"
