//! Models shared by the benchmarks.

use qbound_core::{ChainModel, RateFunction};

/// Single arrivals at rate 1, pairs served at rate 4.
pub fn pair_service() -> ChainModel {
    ChainModel::pair_service(constant(1.0), constant(4.0)).expect("valid model")
}

/// Same queue with `λ(t) = 1 + 0.5 sin 2πt`.
pub fn periodic_pair_service() -> ChainModel {
    let lambda = RateFunction::sinusoidal(1.0, 0.5, 1.0, 0.0).expect("valid rate");
    ChainModel::pair_service(lambda, constant(4.0)).expect("valid model")
}

/// M/M/1 with `λ = 1`, `μ = 4`.
pub fn birth_death() -> ChainModel {
    ChainModel::simple_birth_death(constant(1.0), constant(4.0)).expect("valid model")
}

fn constant(v: f64) -> RateFunction {
    RateFunction::constant(v).expect("valid rate")
}
