//! Image-quality perturbations addressable by a canonical spec id.
//!
//! Grammar (levels are `L1`..`L5`):
//!
//! ```text
//! spec   := "clean"
//!         | "blur:"  amount(sigma)
//!         | "noise:" amount(sigma) [":seed=" u64]
//!         | "dist:"  amount(k)
//!         | "chan:"  ("R"|"G"|"B"|"H"|"S"|"V") ":" ("darker"|"lighter") ":" amount(alpha)
//!         | "comb:"  1..6
//!         | "unseen:" ("motion_blur"|"zoom_blur"|"pixelate"|"fog") ":L" level
//! amount(name) := "L" level | name "=" float
//! ```
//!
//! `PerturbSpec::to_string` emits the canonical form, and parsing that string
//! gives back an equal spec.

mod channel;
mod combined;
mod noise;
mod unseen;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub use channel::{channel_shift, Channel, ChannelShiftParams, Direction};
pub use combined::{apply_combined, CombinedSpec, COMBINED_PRESETS, STAGE_ORDER};
pub use noise::{add_noise, image_seed, NoiseRng};
pub use unseen::{apply_unseen, UnseenKind};

use crate::error::{ensure, Error, Result};
use crate::imgcore::{gaussian_blur, radial_warp, CameraModel, Image};

pub const BLUR_SIGMAS: [f64; 5] = [1.4, 2.9, 5.9, 10.4, 16.4];
pub const NOISE_SIGMAS: [f64; 5] = [20.0, 50.0, 100.0, 150.0, 200.0];
pub const DISTORTION_KS: [f64; 5] = [1.0, 10.0, 50.0, 200.0, 500.0];
pub const CHANNEL_ALPHAS: [f64; 5] = [0.02, 0.2, 0.5, 0.65, 1.0];

/// Focal length used for all distortion perturbations, in pixels.
pub const DISTORTION_FOCAL_LENGTH: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    Blur,
    Noise,
    Distortion,
    Channel(Channel),
}

impl Factor {
    pub const SINGLE: [Factor; 9] = [
        Factor::Blur,
        Factor::Noise,
        Factor::Distortion,
        Factor::Channel(Channel::R),
        Factor::Channel(Channel::G),
        Factor::Channel(Channel::B),
        Factor::Channel(Channel::H),
        Factor::Channel(Channel::S),
        Factor::Channel(Channel::V),
    ];
}

/// A perturbation strength: a canonical table level or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amount {
    Level(u8),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbSpec {
    Clean,
    Blur(Amount),
    Noise { amount: Amount, seed: Option<u64> },
    Distortion(Amount),
    Channel { channel: Channel, direction: Direction, amount: Amount },
    Combined(u8),
    Unseen { kind: UnseenKind, level: u8 },
}

/// Resolved numeric parameters, keyed by name, for metadata and reports.
pub type Params = BTreeMap<&'static str, f64>;

/// Table lookup of a level's parameters. `direction` is required for channel
/// factors and ignored otherwise.
pub fn canonical_params(factor: Factor, direction: Option<Direction>, level: u8) -> Result<Params> {
    ensure!((1..=5).contains(&level), "level must be in 1..=5, got {level}");
    let i = usize::from(level) - 1;
    let mut p = Params::new();
    match factor {
        Factor::Blur => {
            p.insert("sigma", BLUR_SIGMAS[i]);
        }
        Factor::Noise => {
            p.insert("sigma", NOISE_SIGMAS[i]);
        }
        Factor::Distortion => {
            p.insert("k1", DISTORTION_KS[i]);
            p.insert("k2", DISTORTION_KS[i]);
            p.insert("focal_length", DISTORTION_FOCAL_LENGTH);
        }
        Factor::Channel(ch) => {
            ensure!(direction.is_some(), "channel factors need a direction");
            let bounds = ch.bounds();
            p.insert("alpha", CHANNEL_ALPHAS[i]);
            p.insert("a", bounds.floor);
            p.insert("b", bounds.ceiling);
        }
    }
    Ok(p)
}

impl PerturbSpec {
    pub fn level(factor: Factor, direction: Option<Direction>, level: u8) -> Result<Self> {
        let spec = match factor {
            Factor::Blur => PerturbSpec::Blur(Amount::Level(level)),
            Factor::Noise => PerturbSpec::Noise { amount: Amount::Level(level), seed: None },
            Factor::Distortion => PerturbSpec::Distortion(Amount::Level(level)),
            Factor::Channel(channel) => PerturbSpec::Channel {
                channel,
                direction: direction.ok_or_else(|| Error::Contract("channel factors need a direction".into()))?,
                amount: Amount::Level(level),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn factor(&self) -> Option<Factor> {
        match self {
            PerturbSpec::Blur(_) => Some(Factor::Blur),
            PerturbSpec::Noise { .. } => Some(Factor::Noise),
            PerturbSpec::Distortion(_) => Some(Factor::Distortion),
            PerturbSpec::Channel { channel, .. } => Some(Factor::Channel(*channel)),
            _ => None,
        }
    }

    pub fn level_index(&self) -> Option<u8> {
        match self {
            PerturbSpec::Blur(Amount::Level(l))
            | PerturbSpec::Noise { amount: Amount::Level(l), .. }
            | PerturbSpec::Distortion(Amount::Level(l))
            | PerturbSpec::Channel { amount: Amount::Level(l), .. }
            | PerturbSpec::Unseen { level: l, .. } => Some(*l),
            _ => None,
        }
    }

    /// Explicit noise seed carried by the spec id, if any.
    pub fn explicit_seed(&self) -> Option<u64> {
        match self {
            PerturbSpec::Noise { seed, .. } => *seed,
            _ => None,
        }
    }

    pub fn uses_seed(&self) -> bool {
        matches!(self, PerturbSpec::Noise { .. } | PerturbSpec::Combined(_))
    }

    pub fn validate(&self) -> Result<()> {
        let level_ok = |a: &Amount| match a {
            Amount::Level(l) => (1..=5).contains(l),
            Amount::Value(_) => true,
        };
        match self {
            PerturbSpec::Clean => {}
            PerturbSpec::Blur(a) | PerturbSpec::Noise { amount: a, .. } | PerturbSpec::Distortion(a) => {
                ensure!(level_ok(a), "level must be in 1..=5");
                if let Amount::Value(v) = a {
                    ensure!(*v >= 0.0 && v.is_finite(), "parameter must be a finite value >= 0, got {v}");
                }
            }
            PerturbSpec::Channel { amount, .. } => {
                ensure!(level_ok(amount), "level must be in 1..=5");
                if let Amount::Value(v) = amount {
                    ensure!((0.0..=1.0).contains(v), "alpha must be in [0, 1], got {v}");
                }
            }
            PerturbSpec::Combined(i) => {
                ensure!((1..=6).contains(i), "combined preset must be 1..=6, got {i}");
            }
            PerturbSpec::Unseen { level, .. } => {
                ensure!((1..=5).contains(level), "unseen level must be 1..=5, got {level}");
            }
        }
        Ok(())
    }

    /// Every numeric parameter this spec resolves to.
    pub fn resolved_params(&self) -> Result<Params> {
        self.validate()?;
        let value_of = |factor: Factor, dir: Option<Direction>, a: &Amount| -> Result<Params> {
            match a {
                Amount::Level(l) => canonical_params(factor, dir, *l),
                Amount::Value(v) => {
                    let mut p = Params::new();
                    match factor {
                        Factor::Blur | Factor::Noise => {
                            p.insert("sigma", *v);
                        }
                        Factor::Distortion => {
                            p.insert("k1", *v);
                            p.insert("k2", *v);
                            p.insert("focal_length", DISTORTION_FOCAL_LENGTH);
                        }
                        Factor::Channel(ch) => {
                            p.insert("alpha", *v);
                            p.insert("a", ch.bounds().floor);
                            p.insert("b", ch.bounds().ceiling);
                        }
                    }
                    Ok(p)
                }
            }
        };
        Ok(match self {
            PerturbSpec::Clean => Params::new(),
            PerturbSpec::Blur(a) => {
                let mut p = value_of(Factor::Blur, None, a)?;
                p.insert("kernel_size", crate::imgcore::kernel_size_for_sigma(p["sigma"]) as f64);
                p
            }
            PerturbSpec::Noise { amount, .. } => value_of(Factor::Noise, None, amount)?,
            PerturbSpec::Distortion(a) => value_of(Factor::Distortion, None, a)?,
            PerturbSpec::Channel { channel, direction, amount } => {
                value_of(Factor::Channel(*channel), Some(*direction), amount)?
            }
            PerturbSpec::Combined(i) => {
                let c = CombinedSpec::preset(*i)?;
                let mut p = Params::new();
                for (name, a) in ["R_alpha", "G_alpha", "B_alpha", "H_alpha", "S_alpha", "V_alpha"].iter().zip(c.alphas) {
                    p.insert(name, a);
                }
                p.insert("blur_sigma", c.blur_sigma);
                p.insert("noise_sigma", c.noise_sigma);
                p.insert("distort_k", c.distort_k);
                p
            }
            PerturbSpec::Unseen { kind, level } => {
                let mut p = Params::new();
                p.insert(kind.parameter_name(), kind.parameter(*level)?);
                p
            }
        })
    }

    pub fn scenario(&self) -> Scenario {
        match self {
            PerturbSpec::Clean => Scenario::Clean,
            PerturbSpec::Combined(_) => Scenario::Combined,
            PerturbSpec::Unseen { .. } => Scenario::Unseen,
            _ => Scenario::Single,
        }
    }

    /// Grouping key for corruption-error aggregation: the spec id with its
    /// level removed (`blur`, `chan:V:darker`, `comb:3`, `unseen:fog`).
    pub fn family(&self) -> String {
        match self {
            PerturbSpec::Clean => "clean".into(),
            PerturbSpec::Blur(_) => "blur".into(),
            PerturbSpec::Noise { .. } => "noise".into(),
            PerturbSpec::Distortion(_) => "dist".into(),
            PerturbSpec::Channel { channel, direction, .. } => format!("chan:{channel}:{direction}"),
            PerturbSpec::Combined(i) => format!("comb:{i}"),
            PerturbSpec::Unseen { kind, .. } => format!("unseen:{kind}"),
        }
    }
}

/// Test-scenario grouping of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Clean,
    Single,
    Combined,
    Unseen,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Clean, Scenario::Single, Scenario::Combined, Scenario::Unseen];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Clean => "clean",
            Scenario::Single => "single",
            Scenario::Combined => "combined",
            Scenario::Unseen => "unseen",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scenario {s:?}")))
    }
}

fn fmt_amount(f: &mut fmt::Formatter<'_>, name: &str, a: &Amount) -> fmt::Result {
    match a {
        Amount::Level(l) => write!(f, "L{l}"),
        Amount::Value(v) => write!(f, "{name}={v}"),
    }
}

impl fmt::Display for PerturbSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbSpec::Clean => f.write_str("clean"),
            PerturbSpec::Blur(a) => {
                f.write_str("blur:")?;
                fmt_amount(f, "sigma", a)
            }
            PerturbSpec::Noise { amount, seed } => {
                f.write_str("noise:")?;
                fmt_amount(f, "sigma", amount)?;
                if let Some(s) = seed {
                    write!(f, ":seed={s}")?;
                }
                Ok(())
            }
            PerturbSpec::Distortion(a) => {
                f.write_str("dist:")?;
                fmt_amount(f, "k", a)
            }
            PerturbSpec::Channel { channel, direction, amount } => {
                write!(f, "chan:{channel}:{direction}:")?;
                fmt_amount(f, "alpha", amount)
            }
            PerturbSpec::Combined(i) => write!(f, "comb:{i}"),
            PerturbSpec::Unseen { kind, level } => write!(f, "unseen:{kind}:L{level}"),
        }
    }
}

const GRAMMAR_HINT: &str = "expected clean | blur:L1..L5|sigma=<f> | noise:L1..L5|sigma=<f>[:seed=<u64>] | \
dist:L1..L5|k=<f> | chan:<R|G|B|H|S|V>:<darker|lighter>:L1..L5|alpha=<f> | comb:1..6 | \
unseen:<motion_blur|zoom_blur|pixelate|fog>:L1..L5";

fn parse_level(tok: &str) -> Option<u8> {
    let l: u8 = tok.strip_prefix('L')?.parse().ok()?;
    (1..=5).contains(&l).then_some(l)
}

fn parse_amount(tok: &str, name: &str) -> Result<Amount> {
    if let Some(l) = parse_level(tok) {
        return Ok(Amount::Level(l));
    }
    if let Some(v) = tok.strip_prefix(name).and_then(|r| r.strip_prefix('=')) {
        let v: f64 = v
            .parse()
            .map_err(|_| Error::Parse(format!("bad number in {tok:?}; {GRAMMAR_HINT}")))?;
        return Ok(Amount::Value(v));
    }
    Err(Error::Parse(format!("bad amount {tok:?} (want L1..L5 or {name}=<value>); {GRAMMAR_HINT}")))
}

impl FromStr for PerturbSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("malformed spec id {s:?}; {GRAMMAR_HINT}"));
        let spec = match parts.as_slice() {
            ["clean"] => PerturbSpec::Clean,
            ["blur", a] => PerturbSpec::Blur(parse_amount(a, "sigma")?),
            ["noise", a] => PerturbSpec::Noise { amount: parse_amount(a, "sigma")?, seed: None },
            ["noise", a, seed] => {
                let seed = seed
                    .strip_prefix("seed=")
                    .and_then(|v| v.parse::<u64>().ok())
                    .ok_or_else(bad)?;
                PerturbSpec::Noise { amount: parse_amount(a, "sigma")?, seed: Some(seed) }
            }
            ["dist", a] => PerturbSpec::Distortion(parse_amount(a, "k")?),
            ["chan", ch, dir, a] => PerturbSpec::Channel {
                channel: ch.parse()?,
                direction: dir.parse()?,
                amount: parse_amount(a, "alpha")?,
            },
            ["comb", i] => PerturbSpec::Combined(i.parse().map_err(|_| bad())?),
            ["unseen", kind, l] => {
                let kind: UnseenKind = kind.parse()?;
                PerturbSpec::Unseen { kind, level: parse_level(l).ok_or_else(bad)? }
            }
            ["unseen", kind] => {
                // Out-of-scope names still get the dedicated error.
                kind.parse::<UnseenKind>()?;
                return Err(bad());
            }
            _ => return Err(bad()),
        };
        spec.validate().map_err(|e| Error::Parse(format!("{e}; {GRAMMAR_HINT}")))?;
        Ok(spec)
    }
}

/// Applies `spec` to one image. `seed` drives the noise-bearing stages.
pub fn apply_spec(img: &Image, spec: &PerturbSpec, seed: u64) -> Result<Image> {
    let params = spec.resolved_params()?;
    match spec {
        PerturbSpec::Clean => Ok(img.clone()),
        PerturbSpec::Blur(_) => gaussian_blur(img, params["sigma"]),
        PerturbSpec::Noise { .. } => add_noise(img, params["sigma"], seed),
        PerturbSpec::Distortion(_) => {
            let cam = CameraModel {
                focal_length: params["focal_length"],
                ..CameraModel::centered(img.width(), img.height(), params["k1"], params["k2"])
            };
            radial_warp(img, &cam)
        }
        PerturbSpec::Channel { channel, direction, .. } => channel_shift(img, *channel, *direction, params["alpha"]),
        PerturbSpec::Combined(i) => apply_combined(img, &CombinedSpec::preset(*i)?, seed),
        PerturbSpec::Unseen { kind, level } => apply_unseen(img, *kind, *level),
    }
}
