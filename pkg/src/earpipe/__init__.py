"""earpipe: ear-biopotential ECG toolkit.

Signal conditioning, a tiny 1-D CNN inference engine (float and int8),
rolling-window R-peak detection, peak-train correction and HR/HRV, plus
synthetic data and evaluation utilities.
"""

__version__ = "0.1.0"
