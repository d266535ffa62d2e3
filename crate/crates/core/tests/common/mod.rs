#![allow(dead_code)]

use rand::Rng;
use timebin_qkd::channel::{FiberParams, JonesMatrix};
use timebin_qkd::optics::{AmzParams, Jones, Polarization};

pub const SLOT_NS: f64 = 5.0;

/// Lossless AMZ with random couplers, phase, birefringence and delay.
pub fn random_lossless_amz<R: Rng>(rng: &mut R, max_delay: usize) -> AmzParams {
    let delay_slots = rng.random_range(1..=max_delay);
    AmzParams {
        delay_slots,
        delay_ns: SLOT_NS * delay_slots as f64,
        phase_rad: rng.random_range(-10.0..10.0),
        coupler_in_split: Some(rng.random_range(0.0..=1.0)),
        coupler_out_split: rng.random_range(0.0..=1.0),
        modal_birefringence: rng.random_range(0.0..0.03),
        path_length_diff_um: rng.random_range(100.0..2.0e6),
        insertion_loss_db: 0.0,
        ..AmzParams::default()
    }
}

/// Lossless fiber with a Haar-random polarization unitary.
pub fn random_lossless_fiber<R: Rng>(rng: &mut R) -> FiberParams {
    FiberParams {
        length_km: rng.random_range(0.0..200.0),
        atten_db_per_km: 0.0,
        pol_unitary: JonesMatrix::random_unitary(rng),
        ..FiberParams::default()
    }
}

pub fn random_polarization<R: Rng>(rng: &mut R) -> Polarization {
    if rng.random::<bool>() {
        Polarization::H
    } else {
        Polarization::V
    }
}

pub fn power(j: Jones) -> f64 {
    j[0].norm_sqr() + j[1].norm_sqr()
}
