//! Synthetic muni-like market with known ground truth.
//!
//! # Universe
//!
//! | feature | kind | distribution |
//! |---|---|---|
//! | state | cat | uniform over the first `n_states` postal codes |
//! | days_to_maturity | num | log-uniform on [30, 10950] |
//! | age | num | uniform on [0, 3650] days |
//! | coupon | num | 5.0 with prob. 0.55, else uniform on [0, 8] rounded to 1/8 |
//! | coupon_frequency | num | 2 (90%), 1 (5%), 12 (5%); 0 for zero coupons |
//! | bonds_by_obligor | num | floor of log-uniform on [1, 2000] |
//! | amount_issued | num | log-uniform on [1e5, 5e8] USD |
//! | rating | cat | AAA..BBB, skewed towards high grades |
//! | time_to_call | num | callable: uniform on [0, min(dtm, 3650)]; else dtm |
//! | tax_status | cat | tax_exempt 80%, taxable 12%, amt 8%; tax_bp 0, 10, 5 |
//! | sector | cat | 10 sectors, uniform |
//! | put_call | cat | none 45%, call 50%, put 5% |
//! | funding | cat | general_fund 35%, revenue 45%, special_assessment 10%, lease 10% |
//! | deal_amount | num | amount_issued times uniform on [1, 20] |
//! | use_of_proceeds | cat | new_money 50%, refunding 35%, mixed 15% |
//! | payment_frequency | cat | follows coupon_frequency (at_maturity for zeros) |
//!
//! # Targets
//!
//! With `y` the years to maturity and `k` the state position:
//!
//! ```text
//! oas  = state_level(k) + rating_bp * (0.4 + 0.6 (1 - exp(-y / 7)))
//!      + sector_bp + funding_bp + put_call_bp + tax_bp + 3 age / 3650
//!      - 2 log10(bonds_by_obligor) - 1.5 (log10(amount_issued) - 7)
//! yield = 2.0 + 1.8 (1 - exp(-y / 6)) + oas / 100 + tax_pct
//!       + 0.05 max(0, 3 - coupon) / 3 + state_tax(k)
//! state_level(k) = 30 frac(0.618034 k),  state_tax(k) = 0.2 (frac(0.414214 k) - 0.5)
//! ```
//!
//! Observed OAS adds `N(0, noise_std_oas)`; the observed yield is the yield
//! formula evaluated on the observed OAS plus `N(0, noise_std_yield)`. The
//! noiseless values are returned alongside, so a quoted yield's deviation
//! from fair value is known exactly and also leaks into the observed OAS
//! (and hence DxS), as it would for spreads implied from a quoted price.
//!
//! # Paths
//!
//! `yield(t) = fair + r(t)`, `r(0)` the initial mispricing and
//! `r(t + 1) = phi r(t) + N(0, innovation_std_yield)` with
//! `phi = 0.5^(1 / half_life)`; without a half-life `phi = 1` (no reversion).

use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{BondRecord, Dataset, FeatureKind, FeatureSchema, FeatureSpec, FeatureValue};
use crate::error::{Error, Result};
use crate::rng;

pub const STATE_CODES: [&str; 50] = [
    "CA", "NY", "TX", "FL", "IL", "PA", "OH", "MI", "GA", "NC", "NJ", "VA", "WA", "AZ", "MA", "TN", "IN", "MO", "MD",
    "WI", "CO", "MN", "SC", "AL", "LA", "KY", "OR", "OK", "CT", "UT", "IA", "NV", "AR", "MS", "KS", "NM", "NE", "ID",
    "WV", "HI", "NH", "ME", "MT", "RI", "DE", "SD", "ND", "AK", "VT", "WY",
];
pub const RATINGS: [&str; 8] = ["AAA", "AA+", "AA", "AA-", "A+", "A", "A-", "BBB"];
const RATING_WEIGHTS: [f64; 8] = [0.15, 0.15, 0.2, 0.15, 0.12, 0.1, 0.08, 0.05];
const RATING_BP: [f64; 8] = [5.0, 12.0, 20.0, 30.0, 45.0, 60.0, 80.0, 120.0];
pub const SECTORS: [&str; 10] = [
    "general_obligation",
    "education",
    "healthcare",
    "housing",
    "transportation",
    "utilities",
    "water_sewer",
    "power",
    "development",
    "leasing",
];
const SECTOR_BP: [f64; 10] = [0.0, 2.0, 6.0, 4.0, 3.0, 1.0, 1.0, 3.0, 8.0, 5.0];
const TAX_STATUS: [(&str, f64, f64); 3] = [("tax_exempt", 0.8, 0.0), ("taxable", 0.12, 0.9), ("amt", 0.08, 0.25)];
const TAX_OAS_BP: [f64; 3] = [0.0, 10.0, 5.0];
const PUT_CALL: [(&str, f64, f64); 3] = [("none", 0.45, 0.0), ("call", 0.5, 4.0), ("put", 0.05, -3.0)];
const FUNDING: [(&str, f64, f64); 4] = [
    ("general_fund", 0.35, 0.0),
    ("revenue", 0.45, 3.0),
    ("special_assessment", 0.1, 8.0),
    ("lease", 0.1, 4.0),
];
const USE_OF_PROCEEDS: [(&str, f64); 3] = [("new_money", 0.5), ("refunding", 0.35), ("mixed", 0.15)];

pub const MIN_DAYS_TO_MATURITY: f64 = 30.0;
pub const MAX_DAYS_TO_MATURITY: f64 = 10950.0;
const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_bonds: usize,
    pub n_states: usize,
    pub seed: u64,
    /// Basis points.
    pub noise_std_oas: f64,
    /// Percent, on top of the OAS noise passed through to the yield.
    pub noise_std_yield: f64,
    /// `None` disables mean reversion entirely.
    pub reversion_half_life_days: Option<f64>,
    /// Daily residual innovation, percent.
    pub innovation_std_yield: f64,
    pub trade_orders_per_day: usize,
    /// Days covered by the order book, starting at day 0.
    pub order_days: usize,
    pub horizon_days: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_bonds: 2000,
            n_states: 5,
            seed: 0,
            noise_std_oas: 10.0,
            noise_std_yield: 0.1,
            reversion_half_life_days: Some(30.0),
            innovation_std_yield: 0.01,
            trade_orders_per_day: 400,
            order_days: 30,
            horizon_days: 210,
        }
    }
}

impl GeneratorConfig {
    /// Mean-reverting market with enough daily orders for large generic
    /// groups.
    pub fn strong_reversion(seed: u64) -> Self {
        GeneratorConfig {
            n_bonds: 20_000,
            n_states: 2,
            seed,
            noise_std_oas: 15.0,
            noise_std_yield: 0.12,
            reversion_half_life_days: Some(30.0),
            innovation_std_yield: 0.01,
            trade_orders_per_day: 4000,
            order_days: 30,
            horizon_days: 210,
        }
    }

    /// 20k bonds with noise calibrated to a Bayes-optimal R² of 0.9 on both
    /// targets.
    pub fn regression_benchmark(seed: u64) -> Result<Self> {
        let base = GeneratorConfig {
            n_bonds: 20_000,
            n_states: 10,
            seed,
            ..GeneratorConfig::default()
        };
        calibrate_noise(&base, 0.9)
    }

    /// Same universe without reversion: future yield changes are pure noise.
    pub fn zero_signal(seed: u64) -> Self {
        GeneratorConfig {
            reversion_half_life_days: None,
            ..Self::strong_reversion(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_bonds == 0 || self.horizon_days == 0 || self.order_days == 0 || self.trade_orders_per_day == 0 {
            return bad("generator counts must be positive".into());
        }
        if !(1..=STATE_CODES.len()).contains(&self.n_states) {
            return bad(format!("n_states must be in 1..={}", STATE_CODES.len()));
        }
        if !(self.noise_std_oas >= 0.0 && self.noise_std_yield >= 0.0 && self.innovation_std_yield >= 0.0) {
            return bad("noise standard deviations must be nonnegative".into());
        }
        if let Some(h) = self.reversion_half_life_days {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("half-life {h} must be positive"));
            }
        }
        if self.order_days > self.horizon_days {
            return bad("order_days exceeds horizon_days".into());
        }
        Ok(())
    }

    /// Daily AR(1) coefficient.
    pub fn reversion_phi(&self) -> f64 {
        self.reversion_half_life_days.map_or(1.0, |h| 0.5f64.powf(1.0 / h))
    }
}

/// The generator's feature schema, in the order listed in the module docs.
pub fn bond_schema() -> FeatureSchema {
    let spec = |name: &str, kind, unit: Option<&str>| FeatureSpec {
        name: name.into(),
        kind,
        unit: unit.map(Into::into),
    };
    use FeatureKind::{Categorical as C, Numerical as N};
    let mut schema = FeatureSchema::new(
        vec![
            spec("state", C, None),
            spec("days_to_maturity", N, Some("days")),
            spec("age", N, Some("days")),
            spec("coupon", N, Some("%")),
            spec("coupon_frequency", N, Some("1/yr")),
            spec("bonds_by_obligor", N, Some("count")),
            spec("amount_issued", N, Some("USD")),
            spec("rating", C, None),
            spec("time_to_call", N, Some("days")),
            spec("tax_status", C, None),
            spec("sector", C, None),
            spec("put_call", C, None),
            spec("funding", C, None),
            spec("deal_amount", N, Some("USD")),
            spec("use_of_proceeds", C, None),
            spec("payment_frequency", C, None),
        ],
        vec!["oas".into(), "yield".into()],
    )
    .expect("static schema is valid");
    schema.target_units = vec!["bp".into(), "%".into()];
    schema
}

mod col {
    pub const STATE: usize = 0;
    pub const DTM: usize = 1;
    pub const AGE: usize = 2;
    pub const COUPON: usize = 3;
    pub const OBLIGOR: usize = 5;
    pub const AMOUNT: usize = 6;
    pub const RATING: usize = 7;
    pub const TAX: usize = 9;
    pub const SECTOR: usize = 10;
    pub const PUT_CALL: usize = 11;
    pub const FUNDING: usize = 12;
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T], weights: &[f64]) -> T {
    let dist = WeightedIndex::new(weights).expect("static weights are valid");
    items[dist.sample(rng)]
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp().clamp(lo, hi)
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Draws the static universe. Targets are zero until [`generate_targets`].
pub fn generate_universe(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, 1);
    let tax_w: Vec<f64> = TAX_STATUS.iter().map(|t| t.1).collect();
    let pc_w: Vec<f64> = PUT_CALL.iter().map(|t| t.1).collect();
    let fund_w: Vec<f64> = FUNDING.iter().map(|t| t.1).collect();
    let use_w: Vec<f64> = USE_OF_PROCEEDS.iter().map(|t| t.1).collect();
    let width = config.n_bonds.to_string().len().max(6);
    let records = (0..config.n_bonds)
        .map(|i| {
            let state = STATE_CODES[rng.random_range(0..config.n_states)];
            let dtm = log_uniform(&mut rng, MIN_DAYS_TO_MATURITY, MAX_DAYS_TO_MATURITY);
            let age = rng.random_range(0.0..=3650.0f64).round();
            let coupon = if rng.random_bool(0.55) {
                5.0
            } else {
                (rng.random_range(0.0..=8.0f64) * 8.0).round() / 8.0
            };
            let freq = if coupon == 0.0 {
                0.0
            } else {
                pick(&mut rng, &[2.0, 1.0, 12.0], &[0.9, 0.05, 0.05])
            };
            let pay = match freq as u32 {
                0 => "at_maturity",
                1 => "annual",
                12 => "monthly",
                _ => "semiannual",
            };
            let obligor = log_uniform(&mut rng, 1.0, 2000.0).floor();
            let amount = log_uniform(&mut rng, 1e5, 5e8).round();
            let rating = pick(&mut rng, &RATINGS, &RATING_WEIGHTS);
            let put_call = PUT_CALL[WeightedIndex::new(&pc_w).expect("valid").sample(&mut rng)].0;
            let time_to_call = if put_call == "call" {
                rng.random_range(0.0..=dtm.min(3650.0)).round()
            } else {
                dtm
            };
            let tax = TAX_STATUS[WeightedIndex::new(&tax_w).expect("valid").sample(&mut rng)].0;
            let sector = SECTORS[rng.random_range(0..SECTORS.len())];
            let funding = FUNDING[WeightedIndex::new(&fund_w).expect("valid").sample(&mut rng)].0;
            let deal = (amount * rng.random_range(1.0..=20.0f64)).round();
            let proceeds = USE_OF_PROCEEDS[WeightedIndex::new(&use_w).expect("valid").sample(&mut rng)].0;
            let last_trade = rng.random_bool(0.8).then(|| rng.random_range(0..=365u32));

            let years = dtm / DAYS_PER_YEAR;
            let to_worst = if put_call == "call" && coupon > 4.0 {
                time_to_call / DAYS_PER_YEAR
            } else {
                years
            };
            let c = coupon / 100.0;
            let duration = if c > 0.0 {
                (1.0 - (-c * to_worst).exp()) / c
            } else {
                to_worst
            };

            let cat = |s: &str| FeatureValue::Cat(s.to_string());
            BondRecord {
                id: format!("B{i:0width$}"),
                features: vec![
                    cat(state),
                    FeatureValue::Num(dtm),
                    FeatureValue::Num(age),
                    FeatureValue::Num(coupon),
                    FeatureValue::Num(freq),
                    FeatureValue::Num(obligor),
                    FeatureValue::Num(amount),
                    cat(rating),
                    FeatureValue::Num(time_to_call),
                    cat(tax),
                    cat(sector),
                    cat(put_call),
                    cat(funding),
                    FeatureValue::Num(deal),
                    cat(proceeds),
                    cat(pay),
                ],
                targets: vec![0.0, 0.0],
                duration,
                dxs: 0.0,
                last_trade_offset_days: last_trade,
            }
        })
        .collect();
    Ok(Dataset::new(bond_schema(), records))
}

/// Noiseless target values per record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signals {
    pub oas: Vec<f64>,
    pub yield_pct: Vec<f64>,
}

impl Signals {
    /// Best achievable R² per target given the configured noise levels.
    pub fn bayes_r2(&self, config: &GeneratorConfig) -> [f64; 2] {
        let v_oas = variance(&self.oas);
        let v_y = variance(&self.yield_pct);
        let n_oas = config.noise_std_oas.powi(2);
        let n_y = (config.noise_std_oas / 100.0).powi(2) + config.noise_std_yield.powi(2);
        [v_oas / (v_oas + n_oas), v_y / (v_y + n_y)]
    }
}

pub(crate) fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

fn num(r: &BondRecord, c: usize) -> Result<f64> {
    r.features
        .get(c)
        .and_then(FeatureValue::as_num)
        .ok_or_else(|| Error::SchemaMismatch(format!("record '{}' lacks numerical column {c}", r.id)))
}

fn cat(r: &BondRecord, c: usize) -> Result<&str> {
    r.features
        .get(c)
        .and_then(FeatureValue::as_cat)
        .ok_or_else(|| Error::SchemaMismatch(format!("record '{}' lacks categorical column {c}", r.id)))
}

fn lookup<const N: usize>(table: &[(&str, f64, f64); N], token: &str, kind: &'static str) -> Result<f64> {
    table
        .iter()
        .find(|t| t.0 == token)
        .map(|t| t.2)
        .ok_or_else(|| Error::UnknownToken {
            kind,
            token: token.to_string(),
        })
}

fn position(table: &[&str], token: &str, kind: &'static str) -> Result<usize> {
    table
        .iter()
        .position(|&t| t == token)
        .ok_or_else(|| Error::UnknownToken {
            kind,
            token: token.to_string(),
        })
}

/// Noiseless OAS (bp) of a generated record.
pub fn oas_signal(r: &BondRecord) -> Result<f64> {
    let k = position(&STATE_CODES, cat(r, col::STATE)?, "state")? as f64;
    let years = num(r, col::DTM)? / DAYS_PER_YEAR;
    let rating = RATING_BP[position(&RATINGS, cat(r, col::RATING)?, "rating")?];
    let sector = SECTOR_BP[position(&SECTORS, cat(r, col::SECTOR)?, "sector")?];
    Ok(30.0 * frac(0.618034 * k)
        + rating * (0.4 + 0.6 * (1.0 - (-years / 7.0).exp()))
        + sector
        + lookup(&FUNDING, cat(r, col::FUNDING)?, "funding")?
        + lookup(&PUT_CALL, cat(r, col::PUT_CALL)?, "put_call")?
        + TAX_OAS_BP[position(&TAX_STATUS.map(|t| t.0), cat(r, col::TAX)?, "tax_status")?]
        + 3.0 * num(r, col::AGE)? / 3650.0
        - 2.0 * num(r, col::OBLIGOR)?.max(1.0).log10()
        - 1.5 * (num(r, col::AMOUNT)?.max(1.0).log10() - 7.0))
}

/// Yield (%) of a generated record at the given OAS.
pub fn yield_given_oas(r: &BondRecord, oas: f64) -> Result<f64> {
    let k = position(&STATE_CODES, cat(r, col::STATE)?, "state")? as f64;
    let years = num(r, col::DTM)? / DAYS_PER_YEAR;
    let coupon = num(r, col::COUPON)?;
    Ok(2.0
        + 1.8 * (1.0 - (-years / 6.0).exp())
        + oas / 100.0
        + lookup(&TAX_STATUS, cat(r, col::TAX)?, "tax_status")?
        + 0.05 * (3.0 - coupon).max(0.0) / 3.0
        + 0.2 * (frac(0.414214 * k) - 0.5))
}

/// Fills in observed targets and DxS; returns the noiseless signals too.
pub fn generate_targets(universe: &Dataset, config: &GeneratorConfig) -> Result<(Dataset, Signals)> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, 2);
    let mut out = universe.clone();
    let mut signals = Signals {
        oas: Vec::with_capacity(out.len()),
        yield_pct: Vec::with_capacity(out.len()),
    };
    for r in &mut out.records {
        let oas_sig = oas_signal(r)?;
        let z_oas: f64 = rng.sample(StandardNormal);
        let z_y: f64 = rng.sample(StandardNormal);
        let oas = oas_sig + config.noise_std_oas * z_oas;
        let y_sig = yield_given_oas(r, oas_sig)?;
        let y = yield_given_oas(r, oas)? + config.noise_std_yield * z_y;
        r.targets = vec![oas, y];
        r.dxs = r.duration * oas;
        signals.oas.push(oas_sig);
        signals.yield_pct.push(y_sig);
    }
    Ok((out, signals))
}

/// Noise levels giving the requested Bayes R² on both targets for this
/// universe. The yield noise excludes the share already passed through
/// from the OAS noise (floored at zero).
pub fn calibrate_noise(config: &GeneratorConfig, target_r2: f64) -> Result<GeneratorConfig> {
    if !(target_r2 > 0.0 && target_r2 < 1.0) {
        return Err(Error::InvalidArgument(format!("target R2 {target_r2} outside (0, 1)")));
    }
    let universe = generate_universe(config)?;
    let quiet = GeneratorConfig {
        noise_std_oas: 0.0,
        noise_std_yield: 0.0,
        ..config.clone()
    };
    let (_, s) = generate_targets(&universe, &quiet)?;
    let ratio = (1.0 - target_r2) / target_r2;
    let oas_noise = (variance(&s.oas) * ratio).sqrt();
    let y_noise = (variance(&s.yield_pct) * ratio - (oas_noise / 100.0).powi(2))
        .max(0.0)
        .sqrt();
    Ok(GeneratorConfig {
        noise_std_oas: oas_noise,
        noise_std_yield: y_noise,
        ..config.clone()
    })
}

/// Daily yield paths: fair value plus a mean-reverting residual.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    pub ids: Vec<String>,
    pub fair_yield: Vec<f64>,
    /// `residuals[bond][day]`, percent.
    pub residuals: Vec<Vec<f64>>,
}

impl MarketPath {
    pub fn n_days(&self) -> usize {
        self.residuals.first().map_or(0, Vec::len)
    }

    pub fn yield_at(&self, bond: usize, day: usize) -> Option<f64> {
        self.residuals.get(bond)?.get(day).map(|r| self.fair_yield[bond] + r)
    }

    pub fn write_csv(&self, path: &Path, provenance: Option<&str>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        if let Some(p) = provenance {
            writeln!(file, "# {p}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["bond_id", "day", "yield"])?;
        for (b, id) in self.ids.iter().enumerate() {
            for day in 0..self.n_days() {
                let y = self.yield_at(b, day).expect("day in range");
                w.write_record([id.as_str(), &day.to_string(), &y.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Starts every bond at its observed yield and lets the residual decay.
pub fn generate_paths(market: &Dataset, signals: &Signals, config: &GeneratorConfig) -> Result<MarketPath> {
    config.validate()?;
    if signals.yield_pct.len() != market.len() {
        return Err(Error::InvalidArgument("signals do not match the dataset".into()));
    }
    let yield_dim = market
        .schema
        .target_index("yield")
        .ok_or_else(|| Error::SchemaMismatch("no yield target".into()))?;
    let phi = config.reversion_phi();
    let mut rng = rng::stream(config.seed, 3);
    let residuals = market
        .records
        .iter()
        .zip(&signals.yield_pct)
        .map(|(r, fair)| {
            let mut path = Vec::with_capacity(config.horizon_days);
            let mut res = r.targets[yield_dim] - fair;
            path.push(res);
            for _ in 1..config.horizon_days {
                let z: f64 = rng.sample(StandardNormal);
                res = phi * res + config.innovation_std_yield * z;
                path.push(res);
            }
            path
        })
        .collect();
    Ok(MarketPath {
        ids: market.ids(),
        fair_yield: signals.yield_pct.clone(),
        residuals,
    })
}

/// Bonds offered on each day, as sorted record positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeOrderBook {
    pub days: Vec<Vec<usize>>,
}

impl TradeOrderBook {
    pub fn write_csv(&self, path: &Path, ids: &[String], provenance: Option<&str>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        if let Some(p) = provenance {
            writeln!(file, "# {p}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["day", "bond_id"])?;
        for (day, bonds) in self.days.iter().enumerate() {
            for &b in bonds {
                w.write_record([&day.to_string(), ids[b].as_str()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn generate_orders(universe: &Dataset, config: &GeneratorConfig) -> Result<TradeOrderBook> {
    config.validate()?;
    let n = universe.len();
    if config.trade_orders_per_day > n {
        return Err(Error::InvalidArgument(format!(
            "{} orders per day exceed the {n} bonds in the universe",
            config.trade_orders_per_day
        )));
    }
    let mut rng = rng::stream(config.seed, 4);
    let days = (0..config.order_days)
        .map(|_| {
            let mut day = sample(&mut rng, n, config.trade_orders_per_day).into_vec();
            day.sort_unstable();
            day
        })
        .collect();
    Ok(TradeOrderBook { days })
}

/// Everything a back-test needs from one generator run.
#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub config: GeneratorConfig,
    pub dataset: Dataset,
    pub signals: Signals,
    pub paths: MarketPath,
    pub orders: TradeOrderBook,
}

pub fn generate_market(config: &GeneratorConfig) -> Result<SyntheticMarket> {
    let universe = generate_universe(config)?;
    let (dataset, signals) = generate_targets(&universe, config)?;
    let paths = generate_paths(&dataset, &signals, config)?;
    let orders = generate_orders(&dataset, config)?;
    Ok(SyntheticMarket {
        config: config.clone(),
        dataset,
        signals,
        paths,
        orders,
    })
}
