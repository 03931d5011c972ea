use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::game::Trajectory;

/// Signal-to-noise ratio in decibels; `Infinite` means noiseless.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum Snr {
    Db(f64),
    Infinite,
}

impl Snr {
    /// Noise standard deviation relative to the signal RMS.
    pub fn relative_sigma(self) -> f64 {
        match self {
            Snr::Db(db) => 10f64.powf(-db / 20.0),
            Snr::Infinite => 0.0,
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Db(db) => write!(f, "{db}"),
            Snr::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_end_matches("dB").trim_end_matches("db").trim();
        if t.eq_ignore_ascii_case("inf") || t == "∞" {
            return Ok(Snr::Infinite);
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Snr::Db(v)),
            Ok(_) => Ok(Snr::Infinite),
            Err(_) => Err(Error::Config(format!("invalid SNR `{s}`"))),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Snr::Db(db) => s.serialize_f64(*db),
            Snr::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) if v.is_finite() => Ok(Snr::Db(v)),
            Raw::Number(_) => Ok(Snr::Infinite),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr: Snr,
    pub seed: u64,
}

fn perturb(channels: &mut DMatrix<f64>, sigma_rel: f64, rng: &mut ChaCha8Rng) {
    let len = channels.ncols() as f64;
    for mut row in channels.row_iter_mut() {
        let rms = (row.norm_squared() / len).sqrt();
        let sigma = rms * sigma_rel;
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
    }
}

/// Add i.i.d. Gaussian measurement noise to every state and control channel,
/// with `σ_j = RMS_j · 10^(-snr/20)`. The result is generally not a feasible
/// trajectory.
pub fn add_noise(traj: &Trajectory, spec: &NoiseSpec) -> Trajectory {
    let mut noisy = traj.clone();
    if spec.snr == Snr::Infinite {
        return noisy;
    }
    let sigma = spec.snr.relative_sigma();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    perturb(&mut noisy.states, sigma, &mut rng);
    for u in &mut noisy.controls {
        perturb(u, sigma, &mut rng);
    }
    noisy
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinusoid(len: usize) -> Trajectory {
        let states = DMatrix::from_fn(1, len, |_, k| (k as f64 * 0.01).sin());
        Trajectory::new(states, vec![DMatrix::from_fn(1, len, |_, k| 0.5 + (k as f64 * 0.03).cos())]).unwrap()
    }

    #[test]
    fn infinite_snr_is_identity() {
        let t = sinusoid(50);
        assert_eq!(add_noise(&t, &NoiseSpec { snr: Snr::Infinite, seed: 3 }), t);
    }

    #[test]
    fn empirical_snr_matches() {
        let t = sinusoid(100_000);
        let noisy = add_noise(&t, &NoiseSpec { snr: Snr::Db(20.0), seed: 7 });
        for (clean, dirty) in [(&t.states, &noisy.states), (&t.controls[0], &noisy.controls[0])] {
            let signal = clean.norm_squared();
            let noise = (dirty - clean).norm_squared();
            let measured = 10.0 * (signal / noise).log10();
            assert!((measured - 20.0).abs() < 1.0, "{measured}");
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let t = sinusoid(200);
        let spec = NoiseSpec { snr: Snr::Db(15.0), seed: 11 };
        assert_eq!(add_noise(&t, &spec), add_noise(&t, &spec));
        assert_ne!(add_noise(&t, &spec), add_noise(&t, &NoiseSpec { seed: 12, ..spec }));
    }

    #[test]
    fn snr_parsing_and_serde() {
        assert_eq!("inf".parse::<Snr>().unwrap(), Snr::Infinite);
        assert_eq!("30dB".parse::<Snr>().unwrap(), Snr::Db(30.0));
        assert!("loud".parse::<Snr>().is_err());
        let json = serde_json::to_string(&vec![Snr::Db(15.0), Snr::Infinite]).unwrap();
        assert_eq!(json, r#"[15.0,"inf"]"#);
        let back: Vec<Snr> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Snr::Db(15.0), Snr::Infinite]);
    }
}
