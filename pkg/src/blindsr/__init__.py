"""Blind two-dimensional super-resolution of continuous delay-Doppler shifts.

Submodules
----------
model       scenes, subspaces, sampling operators, synthetic observations
spectral    Dirichlet/Fejer kernels, atoms and their derivatives
dualsdp     assembly of the dual semidefinite program and its solution API
solver      homogeneous self-dual interior-point method for conic programs
localize    dual-polynomial evaluation on grids and peak extraction
estimate    least-squares product recovery and scoring against ground truth
certificate direct (SDP-free) construction of the interpolating certificate
cli         command-line pipeline: synth/solve/localize/recover/certify/...
"""

__version__ = "0.1.0"
