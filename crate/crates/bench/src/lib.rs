//! Fixtures shared by the benchmark targets.

use marglik_core::data::{gen_banana, gen_sinusoid, BananaSpec, SinusoidSpec};
use marglik_core::{
    Activation, Dataset, HyperParams, Likelihood, Mlp, NetworkSpec, PriorPrecisions,
};

pub struct Fixture {
    pub mlp: Mlp,
    pub params: Vec<f64>,
    pub data: Dataset,
    pub hypers: HyperParams,
}

/// Tanh network on `n` sinusoid points.
pub fn regression(hidden: Vec<usize>, n: usize) -> Fixture {
    let data = gen_sinusoid(&SinusoidSpec {
        n,
        ..Default::default()
    });
    build(
        NetworkSpec::new(1, hidden, 1, Activation::Tanh),
        data,
        Likelihood::gaussian(0.04),
    )
}

/// Tanh network on `n` banana points.
pub fn classification(hidden: Vec<usize>, n: usize) -> Fixture {
    let data = gen_banana(&BananaSpec {
        n,
        ..Default::default()
    });
    build(
        NetworkSpec::new(2, hidden, 2, Activation::Tanh),
        data,
        Likelihood::categorical(1.0),
    )
}

fn build(spec: NetworkSpec, data: Dataset, likelihood: Likelihood) -> Fixture {
    let mlp = Mlp::new(spec).expect("valid network");
    let params = mlp.init_params(0).into_vec();
    let hypers = HyperParams::new(PriorPrecisions::per_group(mlp.layout(), 1.0), likelihood);
    Fixture {
        mlp,
        params,
        data,
        hypers,
    }
}
