"""Marked continuous contact process with immigration.

Subpackages and modules:

* :mod:`quasicontact.markspace` - finite mark spaces, mutation kernels, Perron data
* :mod:`quasicontact.dispersal` - dispersal kernels on R^d and the torus
* :mod:`quasicontact.hierarchy` - correlation-function hierarchy on a periodic grid
* :mod:`quasicontact.simulator` - exact event-driven particle simulation
* :mod:`quasicontact.config`, :mod:`quasicontact.pipelines`, :mod:`quasicontact.cli`
  - experiment configs, the four pipelines and the command line
"""

from .config import ConfigError, ExperimentConfig, load_config
from .dispersal import GaussianKernel, UniformBallKernel, UniformBoxKernel
from .markspace import (
    ConvergenceError,
    MarkSpace,
    MutationKernel,
    SpectralData,
    SupercriticalError,
    krein_rutman,
    renormalize,
)
from .simulator import SimParams, estimate_k1, estimate_pair_correlation, run_replica, run_replicas

__version__ = "0.1.0"
