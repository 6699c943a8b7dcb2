#![allow(dead_code)]

use std::sync::Arc;

use mvlab::levy::{Annulus, BigBand, LevyModel, MarkSampler, SmallBand};

pub fn levy(dim: usize, small_rate: f64, big_rate: f64) -> LevyModel {
    levy_with(
        dim,
        small_rate,
        Arc::new(Annulus::new(0.1, 1.0)),
        big_rate,
        Arc::new(Annulus::new(1.0, 2.0)),
    )
}

pub fn levy_with(
    dim: usize,
    small_rate: f64,
    small: Arc<dyn MarkSampler>,
    big_rate: f64,
    big: Arc<dyn MarkSampler>,
) -> LevyModel {
    LevyModel::new(
        dim,
        1.0,
        SmallBand::FiniteActivity {
            rate: small_rate,
            marks: small,
        },
        BigBand {
            rate: big_rate,
            marks: big,
        },
    )
    .unwrap()
}

pub fn silent(dim: usize) -> LevyModel {
    LevyModel::silent(dim)
}
