//! Regression term descriptors and design-matrix assembly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::numerics::DesignMatrix;
use crate::scalar::Real;

/// One non-intercept regressor built from covariates (0-based indices) and,
/// for [`Term::TreatmentBy`], the treatment indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Linear(usize),
    Square(usize),
    Cube(usize),
    Product(usize, usize),
    TreatmentBy(usize),
}

impl Term {
    pub fn max_covariate(&self) -> usize {
        match *self {
            Term::Linear(j) | Term::Square(j) | Term::Cube(j) | Term::TreatmentBy(j) => j,
            Term::Product(a, b) => a.max(b),
        }
    }

    pub fn involves_treatment(&self) -> bool {
        matches!(self, Term::TreatmentBy(_))
    }

    #[inline]
    fn eval<T: Real>(&self, row: &[T], treated: bool) -> T {
        match *self {
            Term::Linear(j) => row[j],
            Term::Square(j) => row[j] * row[j],
            Term::Cube(j) => row[j] * row[j] * row[j],
            Term::Product(a, b) => row[a] * row[b],
            Term::TreatmentBy(j) => {
                if treated {
                    row[j]
                } else {
                    T::zero()
                }
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Term::Linear(j) => write!(f, "x{}", j + 1),
            Term::Square(j) => write!(f, "x{}^2", j + 1),
            Term::Cube(j) => write!(f, "x{}^3", j + 1),
            Term::Product(a, b) => write!(f, "x{}*x{}", a + 1, b + 1),
            Term::TreatmentBy(j) => write!(f, "w*x{}", j + 1),
        }
    }
}

/// Linear terms for every covariate.
pub fn linear_terms(p: usize) -> Vec<Term> {
    (0..p).map(Term::Linear).collect()
}

/// Linear, square and adjacent-pair product terms; spans the nonlinear
/// surrogate index used by the data generator.
pub fn quadratic_adjacent_terms(p: usize) -> Vec<Term> {
    let mut terms = linear_terms(p);
    terms.extend((0..p).map(Term::Square));
    terms.extend((0..p.saturating_sub(1)).map(|j| Term::Product(j, j + 1)));
    terms
}

/// Builds `[1, (w), terms...]` over the selected rows. When `treatment` is
/// given, a treatment column follows the intercept.
pub fn build_design<T: Real>(
    x: &Matrix<T>,
    rows: &[usize],
    treatment: Option<&[bool]>,
    terms: &[Term],
) -> DesignMatrix<T> {
    let with_w = treatment.is_some();
    let cols = 1 + usize::from(with_w) + terms.len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for &i in rows {
        let row = x.row(i);
        let treated = treatment.is_some_and(|w| w[i]);
        data.push(T::one());
        if with_w {
            data.push(if treated { T::one() } else { T::zero() });
        }
        for t in terms {
            data.push(t.eval(row, treated));
        }
    }
    let mut labels = vec!["(intercept)".to_string()];
    if with_w {
        labels.push("w".to_string());
    }
    labels.extend(terms.iter().map(Term::to_string));
    let matrix = Matrix::from_row_major(rows.len(), cols, data).expect("consistent shape");
    DesignMatrix::new(matrix, labels).expect("labels match columns")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_columns_follow_term_order() {
        let x = Matrix::from_rows(&[vec![2.0, 3.0], vec![-1.0, 0.5]]).unwrap();
        let w = [true, false];
        let d = build_design(
            &x,
            &[0, 1],
            Some(&w),
            &[Term::Linear(1), Term::Square(0), Term::Product(0, 1), Term::TreatmentBy(0)],
        );
        assert_eq!(d.labels(), &["(intercept)", "w", "x2", "x1^2", "x1*x2", "w*x1"]);
        assert_eq!(d.matrix().row(0), &[1.0, 1.0, 3.0, 4.0, 6.0, 2.0]);
        assert_eq!(d.matrix().row(1), &[1.0, 0.0, 0.5, 1.0, -0.5, 0.0]);
    }

    #[test]
    fn quadratic_adjacent_counts() {
        assert_eq!(quadratic_adjacent_terms(5).len(), 5 + 5 + 4);
        assert_eq!(quadratic_adjacent_terms(1).len(), 2);
    }
}
