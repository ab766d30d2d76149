"""capwave: harmonic field reconstruction from satellite and local ground data.

The package combines a regularized downward-continuation transform acting on
outer-sphere data with a cap-localized wavelet refinement acting on
inner-sphere data. The kernel pair driving both transforms is obtained as the
unique minimizer of a quadratic functional balancing reconstruction fidelity,
regularization, and spatial localization of the wavelet.

Modules: legendre (orthogonal polynomial engine), harmonics (real spherical
harmonics, grids, scalar transforms), kernels (zonal kernel pairs and their
optimization), transforms (scalar field operators and noise), vector_field
(gradient-field analogues), experiments (sweep tables), cli (command line).
"""

from . import legendre, harmonics, kernels, transforms, vector_field, experiments

__version__ = "0.1.0"
