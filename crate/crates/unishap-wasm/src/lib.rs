//! JSON-over-string bindings for the browser demo in `www/`.
//!
//! Three operations back the page: [`size_profile`] charts the τ-family of
//! coalition-size distributions, [`plateau_theory`] evaluates the analytic
//! sample-complexity quantities of the size-plateau game across τ, and
//! [`demo_estimate`] runs a full estimate on a small built-in game and
//! scores it against the exact attributions. Each has a pure `_json`
//! counterpart that is unit-tested on the host target.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use unishap::combinatorics::log_binomial;
use unishap::diagnostics::{adversarial_gamma_analytic, eta_closed_form};
use unishap::error::Error;
use unishap::estimators::{estimate, preset};
use unishap::exact::exact_bruteforce;
use unishap::games::{AdversarialGame, Game, TabularGame};
use unishap::sampling::BucketDistribution;

/// Largest `d` the demo page accepts for the plateau game.
pub const MAX_PLATEAU_D: usize = 128;
/// Largest `d` the demo page accepts for random tabular games, which
/// materialize a `2^d` value table and an enumerated reference.
pub const MAX_RANDOM_D: usize = 16;
/// Largest sample budget a single page interaction may request.
pub const MAX_DEMO_M: usize = 1 << 16;

#[derive(Serialize)]
struct SizeBucket {
    h: usize,
    log10_coalitions: f64,
    bucket_prob: f64,
    subset_prob: f64,
}

#[derive(Serialize)]
struct SizeProfile {
    d: usize,
    tau: f64,
    eta: f64,
    buckets: Vec<SizeBucket>,
}

/// Per-size inclusion probabilities of the τ-family over `d` players,
/// with the worst-case weight ratio η.
pub fn size_profile_json(d: usize, tau: f64) -> Result<String, Error> {
    let dist = BucketDistribution::new(d, tau)?;
    let buckets = (1..d)
        .map(|h| SizeBucket {
            h,
            log10_coalitions: log_binomial(d, h) / std::f64::consts::LN_10,
            bucket_prob: dist.bucket_prob(h),
            subset_prob: dist.subset_prob(h),
        })
        .collect();
    let profile = SizeProfile {
        d,
        tau,
        eta: eta_closed_form(tau, d)?,
        buckets,
    };
    Ok(serde_json::to_string(&profile).expect("profile serializes"))
}

#[derive(Serialize)]
struct TheoryPoint {
    tau: f64,
    gamma: f64,
    eta: f64,
    bound_matvec: f64,
    eta_log_term: f64,
}

#[derive(Serialize)]
struct TheoryCurve {
    d: usize,
    n: usize,
    xi: f64,
    chi: f64,
    eps: f64,
    delta: f64,
    points: Vec<TheoryPoint>,
}

/// Analytic `γ_τ(b_α)` and `η_τ` of the size-plateau game per requested τ,
/// with the matvec sample bound `γ/(δε²)` and the `η·ln(d/δ)` term of the
/// regression bound. Closed forms throughout, so any demo-scale `d` works.
pub fn plateau_theory_json(
    d: usize,
    n: usize,
    xi: f64,
    chi: f64,
    eps: f64,
    delta: f64,
    taus: &[f64],
) -> Result<String, Error> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    if taus.is_empty() {
        return Err(Error::InvalidArgument("at least one tau is required".into()));
    }
    let mut points = Vec::with_capacity(taus.len());
    for &tau in taus {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!(
                "tau must lie in [0,1], got {tau}"
            )));
        }
        let gamma = adversarial_gamma_analytic(d, n, xi, chi, tau)?;
        let eta = eta_closed_form(tau, d)?;
        points.push(TheoryPoint {
            tau,
            gamma,
            eta,
            bound_matvec: gamma / (delta * eps * eps),
            eta_log_term: eta * (d as f64 / delta).ln(),
        });
    }
    let curve = TheoryCurve {
        d,
        n,
        xi,
        chi,
        eps,
        delta,
        points,
    };
    Ok(serde_json::to_string(&curve).expect("curve serializes"))
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DemoGame {
    Plateau { d: usize, n: usize, xi: f64, chi: f64 },
    Random { d: usize, seed: u64 },
}

#[derive(Deserialize)]
struct DemoRequest {
    game: DemoGame,
    preset: String,
    m: usize,
    seed: u64,
}

#[derive(Serialize)]
struct DemoResponse {
    d: usize,
    phi: Vec<f64>,
    exact: Vec<f64>,
    mse: f64,
    mse_is_raw: bool,
    efficiency_gap: f64,
    rows: usize,
    evaluations: usize,
    solver: String,
}

fn build_demo_game(game: &DemoGame) -> Result<Box<dyn Game>, Error> {
    match *game {
        DemoGame::Plateau { d, n, xi, chi } => {
            if d > MAX_PLATEAU_D {
                return Err(Error::InvalidArgument(format!(
                    "demo plateau games support d <= {MAX_PLATEAU_D}, got {d}"
                )));
            }
            Ok(Box::new(AdversarialGame::new(d, n, xi, chi, 0.5)?))
        }
        DemoGame::Random { d, seed } => {
            if d > MAX_RANDOM_D {
                return Err(Error::InvalidArgument(format!(
                    "demo random games support d <= {MAX_RANDOM_D}, got {d}"
                )));
            }
            Ok(Box::new(TabularGame::random(d, seed)?))
        }
    }
}

/// Runs one configured estimate and scores it against the exact
/// attributions. The request is a JSON object:
///
/// ```json
/// {"game": {"kind": "plateau", "d": 16, "n": 2, "xi": 1.0, "chi": 0.25},
///  "preset": "leverageshap", "m": 256, "seed": 7}
/// ```
///
/// with `{"kind": "random", "d": 10, "seed": 3}` as the other game form.
pub fn demo_estimate_json(request: &str) -> Result<String, Error> {
    let request: DemoRequest = serde_json::from_str(request)
        .map_err(|e| Error::InvalidArgument(format!("demo request: {e}")))?;
    if request.m > MAX_DEMO_M {
        return Err(Error::InvalidArgument(format!(
            "demo budgets support m <= {MAX_DEMO_M}, got {}",
            request.m
        )));
    }
    let game = build_demo_game(&request.game)?;
    let exact = match game.exact_shapley() {
        Some(phi) => phi,
        None => exact_bruteforce(game.as_ref())?.phi,
    };

    let mut config = preset(&request.preset)?;
    config.m = request.m;
    config.seed = request.seed;
    let output = estimate(game.as_ref(), &config)?;

    let squared: f64 = output
        .phi
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let norm_sq: f64 = exact.iter().map(|x| x * x).sum();
    let (mse, mse_is_raw) = if norm_sq > 0.0 {
        (squared / norm_sq, false)
    } else {
        (squared, true)
    };
    let response = DemoResponse {
        d: game.d(),
        phi: output.phi,
        exact,
        mse,
        mse_is_raw,
        efficiency_gap: output.metadata.efficiency_gap,
        rows: output.metadata.rows,
        evaluations: output.metadata.evaluations,
        solver: output.metadata.solver,
    };
    Ok(serde_json::to_string(&response).expect("response serializes"))
}

#[wasm_bindgen]
pub fn size_profile(d: u32, tau: f64) -> Result<String, JsError> {
    Ok(size_profile_json(d as usize, tau)?)
}

#[wasm_bindgen]
pub fn plateau_theory(
    d: u32,
    n: u32,
    xi: f64,
    chi: f64,
    eps: f64,
    delta: f64,
    taus: &[f64],
) -> Result<String, JsError> {
    Ok(plateau_theory_json(
        d as usize, n as usize, xi, chi, eps, delta, taus,
    )?)
}

#[wasm_bindgen]
pub fn demo_estimate(request: &str) -> Result<String, JsError> {
    Ok(demo_estimate_json(request)?)
}
