use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 11;
pub const DEFAULT_POLYORDER: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub values: Vec<f64>,
    /// False when the series was shorter than the window and returned as is.
    pub applied: bool,
}

/// Savitzky-Golay smoothing. Interior samples use the centred window; the
/// first and last `window / 2` samples evaluate the polynomial fitted on
/// the one-sided window at the border.
pub fn savgol_smooth(values: &[f64], window: usize, polyorder: usize) -> Result<Smoothed> {
    if window % 2 == 0 {
        return Err(Error::Config(format!("window length {window} must be odd")));
    }
    if polyorder >= window {
        return Err(Error::Config(format!(
            "polynomial order {polyorder} must be below the window length {window}"
        )));
    }
    let n = values.len();
    if n < window {
        return Ok(Smoothed {
            values: values.to_vec(),
            applied: false,
        });
    }

    let half = window / 2;
    let weights = fit_weights(window, polyorder)?;
    let mut out = vec![0.0; n];
    let dot = |w: &[f64], start: usize| -> f64 {
        w.iter().zip(&values[start..start + window]).map(|(a, b)| a * b).sum()
    };
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = if i < half {
            dot(&weights[i], 0)
        } else if i + half >= n {
            dot(&weights[window - (n - i)], n - window)
        } else {
            dot(&weights[half], i - half)
        };
    }
    Ok(Smoothed {
        values: out,
        applied: true,
    })
}

/// Row `k` holds the weights that evaluate the least-squares polynomial
/// over one window at the window's `k`-th sample.
fn fit_weights(window: usize, polyorder: usize) -> Result<Vec<Vec<f64>>> {
    let half = (window / 2) as f64;
    let scale = half.max(1.0);
    let cols = polyorder + 1;
    let pos = |j: usize| (j as f64 - half) / scale;
    let design = DMatrix::from_fn(window, cols, |j, k| pos(j).powi(k as i32));
    let normal = design.transpose() * &design;
    let inv = normal
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Config("degenerate Savitzky-Golay design".into()))?;
    let projector = inv * design.transpose();
    Ok((0..window)
        .map(|k| {
            let basis = DVector::from_fn(cols, |c, _| pos(k).powi(c as i32));
            (basis.transpose() * &projector).iter().copied().collect()
        })
        .collect())
}
