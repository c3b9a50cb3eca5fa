//! Complex matrix products on real `f64` kernels.
//!
//! nalgebra multiplies `Complex<f64>` matrices with a generic loop, while
//! real matrices go through a blocked kernel. Keeping the real and imaginary
//! parts apart and forming each product from three real products is several
//! times faster at the sizes used here.

use nalgebra::DMatrix;

use crate::{CMatrix, C64};

#[derive(Debug, Clone)]
pub(crate) struct Split {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl Split {
    pub fn new(m: &CMatrix) -> Self {
        Split {
            re: m.map(|z| z.re),
            im: m.map(|z| z.im),
        }
    }

    pub fn to_complex(&self) -> CMatrix {
        self.re.zip_map(&self.im, C64::new)
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &Split) -> Split {
        let t1 = &self.re * &rhs.re;
        let t2 = &self.im * &rhs.im;
        let mut t3 = (&self.re + &self.im) * (&rhs.re + &rhs.im);
        t3 -= &t1;
        t3 -= &t2;
        Split {
            re: t1 - t2,
            im: t3,
        }
    }

    /// `self · selfᴴ`.
    pub fn gram(&self) -> Split {
        let (rt, it) = (self.re.transpose(), self.im.transpose());
        let re = &self.re * &rt + &self.im * &it;
        let im = &self.im * &rt - &self.re * &it;
        Split { re, im }
    }

    /// `Re(xᴴ y)` for every column pair.
    pub fn column_real_dots(&self, other: &Split) -> Vec<f64> {
        let mut out = vec![0.0; self.re.ncols()];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.re.column(j).dot(&other.re.column(j))
                + self.im.column(j).dot(&other.im.column(j));
        }
        out
    }

    /// Columns in `cols`, column `c` scaled by `w[c]`.
    pub fn scaled_columns(&self, cols: &[usize], w: &[f64]) -> Split {
        let rows = self.re.nrows();
        let pick = |m: &DMatrix<f64>| {
            DMatrix::from_fn(rows, cols.len(), |r, k| m[(r, cols[k])] * w[cols[k]])
        };
        Split {
            re: pick(&self.re),
            im: pick(&self.im),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::complex_gaussian;
    use crate::rng::stream_rng;

    fn random(seed: u64, r: usize, c: usize) -> CMatrix {
        let mut rng = stream_rng(seed, 5);
        CMatrix::from_fn(r, c, |_, _| complex_gaussian(&mut rng, 1.0))
    }

    #[test]
    fn product_matches_generic_complex_product() {
        let (a, b) = (random(1, 7, 5), random(2, 5, 9));
        let reference = &a * &b;
        let product = Split::new(&a).mul(&Split::new(&b)).to_complex();
        assert!((product - &reference).norm() < 1e-13 * reference.norm());
    }

    #[test]
    fn gram_matches_explicit_adjoint() {
        let a = random(3, 6, 11);
        let reference = &a * a.adjoint();
        assert!(
            (Split::new(&a).gram().to_complex() - &reference).norm() < 1e-13 * reference.norm()
        );
    }

    #[test]
    fn column_dots_and_selection() {
        let (a, b) = (random(4, 4, 3), random(5, 4, 3));
        let dots = Split::new(&a).column_real_dots(&Split::new(&b));
        for j in 0..3 {
            assert!((dots[j] - a.column(j).dotc(&b.column(j)).re).abs() < 1e-13);
        }
        let picked = Split::new(&a)
            .scaled_columns(&[2, 0], &[2.0, 1.0, -1.0])
            .to_complex();
        assert_eq!(picked.column(0), a.column(2) * C64::from(-1.0));
        assert_eq!(picked.column(1), a.column(0) * C64::from(2.0));
    }
}
