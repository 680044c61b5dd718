//! dB / linear conversions. Everything inside the solvers is linear (W, unitless
//! gains); dB and dBm only appear at config and report boundaries.

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

/// Free-space path loss in dB (Friis) at distance `d_m` and carrier `freq_hz`.
pub fn free_space_path_loss_db(d_m: f64, freq_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * d_m * freq_hz / SPEED_OF_LIGHT).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_round_trip() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((watts_to_dbm(1e-3)).abs() < 1e-12);
        assert!((watts_to_dbm(dbm_to_watts(-120.0)) + 120.0).abs() < 1e-9);
    }

    #[test]
    fn fspl_at_600km_2ghz() {
        let fspl = free_space_path_loss_db(600e3, 2e9);
        assert!((fspl - 154.03).abs() < 0.01, "{fspl}");
    }
}
