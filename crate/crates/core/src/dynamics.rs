use nalgebra::{SMatrix, SVector};

/// A control-affine system `x' = f(x) + g(x) u`.
pub trait ControlAffine<const N: usize, const M: usize> {
    fn drift(&self, x: &SVector<f64, N>) -> SVector<f64, N>;

    fn input_matrix(&self, x: &SVector<f64, N>) -> SMatrix<f64, N, M>;

    fn flow(&self, x: &SVector<f64, N>, u: &SVector<f64, M>) -> SVector<f64, N> {
        self.drift(x) + self.input_matrix(x) * u
    }

    /// Maps a state back onto its canonical chart (e.g. wraps angles).
    fn normalize(&self, x: SVector<f64, N>) -> SVector<f64, N> {
        x
    }
}

impl<const N: usize, const M: usize, T: ControlAffine<N, M> + ?Sized> ControlAffine<N, M> for &T {
    fn drift(&self, x: &SVector<f64, N>) -> SVector<f64, N> {
        (**self).drift(x)
    }

    fn input_matrix(&self, x: &SVector<f64, N>) -> SMatrix<f64, N, M> {
        (**self).input_matrix(x)
    }

    fn flow(&self, x: &SVector<f64, N>, u: &SVector<f64, M>) -> SVector<f64, N> {
        (**self).flow(x, u)
    }

    fn normalize(&self, x: SVector<f64, N>) -> SVector<f64, N> {
        (**self).normalize(x)
    }
}
