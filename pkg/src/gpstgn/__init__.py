"""Graph-pruned spatio-temporal graph convolutional traffic forecasting.

Modules map onto the pipeline stages: :mod:`autodiff` (tensor engine),
:mod:`graph` (Laplacian and Chebyshev convolution), :mod:`pruning`,
:mod:`data`, :mod:`model`, :mod:`checkpoint`, :mod:`training`,
:mod:`transfer`, :mod:`evaluation`, :mod:`complexity` and :mod:`cli`.
"""

__version__ = "0.1.0"
