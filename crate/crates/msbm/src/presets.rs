//! Benchmark parameter sets used by the experiment harness and tests.

use ndarray::arr2;

use crate::model::ModelParams;

/// Two communities, dense connectivity.
pub fn two_communities() -> ModelParams {
    let p = arr2(&[[0.2, 0.8], [0.6, 0.4]]);
    let q0 = arr2(&[[0.8, 0.2], [0.2, 0.3]]);
    ModelParams::with_stationary(p, 1.0, q0).expect("valid preset")
}

/// Four communities, dense connectivity.
pub fn four_communities() -> ModelParams {
    let p = arr2(&[
        [0.10, 0.30, 0.50, 0.10],
        [0.45, 0.15, 0.20, 0.20],
        [0.15, 0.30, 0.10, 0.45],
        [0.25, 0.30, 0.10, 0.35],
    ]);
    let q0 = arr2(&[
        [0.22, 0.48, 0.29, 0.44],
        [0.48, 0.61, 0.18, 0.15],
        [0.29, 0.18, 0.08, 0.87],
        [0.44, 0.15, 0.87, 0.27],
    ]);
    ModelParams::with_stationary(p, 1.0, q0).expect("valid preset")
}

/// Five communities; two of them stay small under the stationary law.
pub fn five_communities() -> ModelParams {
    let p = arr2(&[
        [0.10, 0.30, 0.50, 0.01, 0.09],
        [0.55, 0.15, 0.10, 0.05, 0.15],
        [0.15, 0.30, 0.10, 0.20, 0.25],
        [0.15, 0.05, 0.10, 0.50, 0.20],
        [0.20, 0.30, 0.10, 0.05, 0.35],
    ]);
    let q0 = arr2(&[
        [0.600, 0.150, 0.275, 0.250, 0.250],
        [0.150, 0.500, 0.250, 0.100, 0.375],
        [0.275, 0.250, 0.600, 0.175, 0.125],
        [0.250, 0.100, 0.175, 0.200, 0.325],
        [0.250, 0.375, 0.125, 0.325, 0.700],
    ]);
    ModelParams::with_stationary(p, 1.0, q0).expect("valid preset")
}

/// Look up a preset by its config-file key.
pub fn by_name(name: &str) -> Option<ModelParams> {
    match name {
        "k2" => Some(two_communities()),
        "k4" => Some(four_communities()),
        "k5" => Some(five_communities()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for (name, p) in [
            ("k2", two_communities()),
            ("k4", four_communities()),
            ("k5", five_communities()),
        ] {
            assert!((p.pi.sum() - 1.0).abs() < 1e-12, "{name}");
            assert!(crate::model::snr(&p, 100).is_ok(), "{name}");
        }
        assert!(by_name("k4").is_some());
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn four_community_stationary_values() {
        // Fixed point of P, computed independently by power iteration.
        let p = four_communities();
        let mut v = [0.25f64; 4];
        for _ in 0..400 {
            let mut nv = [0.0f64; 4];
            for j in 0..4 {
                for i in 0..4 {
                    nv[j] += v[i] * p.p[[i, j]];
                }
            }
            v = nv;
        }
        for c in 0..4 {
            assert!((p.pi[c] - v[c]).abs() < 1e-10);
        }
        let expected = [0.243332115455, 0.260869565217, 0.223419802704, 0.272378516624];
        for c in 0..4 {
            assert!((p.pi[c] - expected[c]).abs() < 5e-10);
        }
    }
}
