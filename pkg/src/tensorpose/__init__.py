"""Joint refinement of camera poses and decomposed low-rank tensor scene
content, with separable component-wise Gaussian filtering for coarse-to-fine
spectral control."""

__version__ = "0.1.0"
