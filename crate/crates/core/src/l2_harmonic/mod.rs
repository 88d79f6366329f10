//! L²(Ω) harmonic bases from layer potentials, their Gram matrices, the
//! discrete harmonic Bergman projection and the trace-map spectrum.

pub mod basis;
pub mod bergman;
pub mod domain;
pub mod kernel_svd;

pub use basis::{build_basis, gram, BasisElement, BasisOptions, HarmonicBasis};
pub use bergman::{bergman_project, represent, BergmanProjector, BergmanResult};
pub use domain::{triangulate, DomainQuadrature, Triangle};
pub use kernel_svd::{kernel_spectrum, trace_kernel_svd, KernelSpectrum, KernelSvdReport};
