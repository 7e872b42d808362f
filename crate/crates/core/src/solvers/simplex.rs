use nalgebra::DVector;

use crate::error::{Error, Result};

/// Euclidean projection onto `{w : w ≥ 0, Σ w = 1}` by sorting and thresholding.
pub fn project_simplex(v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("cannot project an empty vector onto the simplex"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("simplex projection input"));
    }
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    Ok(v.map(|x| (x - theta).max(0.0)))
}

/// `(x − x⁺)/α`.
pub fn gradient_mapping(current: &DVector<f64>, next: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if current.len() != next.len() {
        return Err(Error::dims(current.len(), next.len()));
    }
    Ok((current - next) / alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    #[test]
    fn points_of_the_simplex_are_fixed() {
        let p = v(&[0.2, 0.3, 0.5]);
        assert_eq!(project_simplex(&p).unwrap(), p);
        assert_eq!(project_simplex(&v(&[7.0])).unwrap(), v(&[1.0]));
    }

    #[test]
    fn clipping_examples() {
        assert_eq!(project_simplex(&v(&[2.0, 0.0])).unwrap(), v(&[1.0, 0.0]));
        assert_eq!(project_simplex(&v(&[0.0, 0.0])).unwrap(), v(&[0.5, 0.5]));
        assert_eq!(project_simplex(&v(&[1.0, 1.0, -5.0])).unwrap(), v(&[0.5, 0.5, 0.0]));
    }

    #[test]
    fn errors() {
        assert!(project_simplex(&DVector::zeros(0)).is_err());
        assert!(project_simplex(&v(&[f64::NAN])).is_err());
        assert!(gradient_mapping(&v(&[1.0]), &v(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn gradient_mapping_examples() {
        let y = v(&[1.0, 0.0]);
        assert_eq!(gradient_mapping(&y, &y, 0.3).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(gradient_mapping(&y, &v(&[0.5, 0.5]), 0.5).unwrap(), v(&[1.0, -1.0]));
    }
}
