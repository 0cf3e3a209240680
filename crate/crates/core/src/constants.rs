//! Physical constants in SI units, CODATA 2018 recommended values.

/// Reduced Planck constant ħ (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Elementary charge |e| (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Vacuum permittivity ε₀ (F/m).
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coulomb_constant_matches_codata() {
        // 1/(4πε₀) = 8.987 551 7923(14)e9 N·m²/C²
        let k = 1.0 / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY);
        assert!((k - 8.987_551_792_3e9).abs() / k < 1e-10);
    }
}
