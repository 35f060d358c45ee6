use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// ULA response `exp(jπ n u)` for spatial frequency `u = sin θ`,
/// half-wavelength spacing, unnormalized.
pub fn steering_vector(n_antennas: usize, u: f64) -> Vec<Complex64> {
    (0..n_antennas)
        .map(|n| Complex64::from_polar(1.0, PI * n as f64 * u))
        .collect()
}

/// Beam `k` of a `K`-beam DFT codebook points at `u_k = −1 + 2k/K`.
pub fn beam_spatial_frequency(k: usize, n_beams: usize) -> f64 {
    -1.0 + 2.0 * k as f64 / n_beams as f64
}

/// Finite set of unit-norm precoders for a ULA.
#[derive(Clone, Debug)]
pub struct Codebook {
    n_antennas: usize,
    beams: Vec<Vec<Complex64>>,
}

impl Codebook {
    /// DFT steering codebook. `K < N_t` is accepted but leaves gaps in
    /// angular coverage; see [`Codebook::is_undersampled`].
    pub fn dft(n_antennas: usize, n_beams: usize) -> Result<Self> {
        if n_antennas == 0 || n_beams == 0 {
            return Err(Error::Config("codebook needs at least one antenna and one beam".into()));
        }
        let norm = 1.0 / (n_antennas as f64).sqrt();
        let beams = (0..n_beams)
            .map(|k| {
                steering_vector(n_antennas, beam_spatial_frequency(k, n_beams))
                    .into_iter()
                    .map(|w| w * norm)
                    .collect()
            })
            .collect();
        Ok(Codebook { n_antennas, beams })
    }

    pub fn is_undersampled(&self) -> bool {
        self.beams.len() < self.n_antennas
    }

    pub fn n_beams(&self) -> usize {
        self.beams.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn beam(&self, k: usize) -> &[Complex64] {
        &self.beams[k]
    }

    pub fn beams(&self) -> &[Vec<Complex64>] {
        &self.beams
    }
}

/// `hᴴw = Σ_n conj(h[n]) · w[n]`.
pub fn inner(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}
