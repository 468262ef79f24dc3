//! INI experiment configuration.
//!
//! Every key is optional; missing keys take the defaults below. Unknown
//! sections or keys are rejected so typos do not silently fall back.
//!
//! ```ini
//! [channel]
//! distance_km = 0
//! fiber_loss_db_per_km = 0.2
//! other_loss = 0.045
//! misalignment = 0.033
//! dark_count = 1.7e-6
//! ec_efficiency = 1.16
//!
//! [source]
//! phases = 9, 10, 11, 12, 14, inf
//!
//! [sweep]
//! start_km = 0
//! stop_km = 150
//! step_km = 5
//!
//! [noise]
//! e11b_start = 0
//! e11b_stop = 0.2
//! e11b_step = 0.001
//!
//! [intensity]
//! mu_min = 0.01
//! mu_max = 1.0
//! nu_min = 0.001
//! points = 40
//! # fixed intensities for `estimate` and `simulate`
//! mu = 0.3
//! nu = 0.01
//!
//! [estimation]
//! truncation_k = 3
//! num_decoys_m = 2
//! # epsilon_override = 0.0
//! tail_model = coupled
//!
//! [series]
//! relative_term_cutoff = 1e-16
//! max_terms = 200
//!
//! [output]
//! path = keyrate.csv
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ini::Ini;

use dprmdi_core::channel::{ChannelParams, IntensitySettings};
use dprmdi_core::estimator::{EstimationConfig, TailModel};
use dprmdi_core::fock::{PhaseRandomization, SeriesPolicy};
use dprmdi_core::key_rate::IntensityGrid;
use dprmdi_core::sweep::linear_grid;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub channel: ChannelParams,
    pub phases: Vec<PhaseRandomization>,
    pub start_km: f64,
    pub stop_km: f64,
    pub step_km: f64,
    pub e11b_start: f64,
    pub e11b_stop: f64,
    pub e11b_step: f64,
    pub grid: IntensityGrid,
    /// Fixed intensities for single-point commands.
    pub intensities: IntensitySettings,
    pub estimation: EstimationConfig,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            channel: ChannelParams::default(),
            phases: [9, 10, 11, 12, 14]
                .into_iter()
                .map(PhaseRandomization::Discrete)
                .chain([PhaseRandomization::Continuous])
                .collect(),
            start_km: 0.0,
            stop_km: 150.0,
            step_km: 5.0,
            e11b_start: 0.0,
            e11b_stop: 0.2,
            e11b_step: 0.001,
            grid: IntensityGrid::default(),
            intensities: IntensitySettings {
                signal: 0.3,
                decoy: 0.01,
            },
            estimation: EstimationConfig::default(),
            output: None,
        }
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    (
        "channel",
        &[
            "distance_km",
            "fiber_loss_db_per_km",
            "other_loss",
            "misalignment",
            "dark_count",
            "ec_efficiency",
        ],
    ),
    ("source", &["phases"]),
    ("sweep", &["start_km", "stop_km", "step_km"]),
    ("noise", &["e11b_start", "e11b_stop", "e11b_step"]),
    ("intensity", &["mu_min", "mu_max", "nu_min", "points", "mu", "nu"]),
    (
        "estimation",
        &["truncation_k", "num_decoys_m", "epsilon_override", "tail_model"],
    ),
    ("series", &["relative_term_cutoff", "max_terms"]),
    ("output", &["path"]),
];

struct Reader<'a> {
    ini: &'a Ini,
}

impl Reader<'_> {
    fn get<T: FromStr>(&self, section: &str, key: &str, target: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(raw) = self.ini.get_from(Some(section), key) {
            *target = raw
                .trim()
                .parse()
                .map_err(|e| anyhow!("[{section}] {key} = {raw:?}: {e}"))?;
        }
        Ok(())
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.get_from(Some(section), key).map(str::trim)
    }
}

pub fn parse_phases(list: &str) -> Result<Vec<PhaseRandomization>> {
    let phases = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<PhaseRandomization>()
                .map_err(|e| anyhow!("phases entry {s:?}: {e}"))
        })
        .collect::<Result<Vec<_>>>()?;
    if phases.is_empty() {
        bail!("phases list is empty");
    }
    Ok(phases)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text)?;
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    bail!("key {k:?} outside any section");
                }
                continue;
            };
            let Some((_, keys)) = KNOWN.iter().find(|(s, _)| *s == section) else {
                bail!("unknown section [{section}]");
            };
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    bail!("unknown key {k:?} in [{section}]");
                }
            }
        }

        let r = Reader { ini: &ini };
        let mut c = Self::default();
        let ch = &mut c.channel;
        r.get("channel", "distance_km", &mut ch.distance_km)?;
        r.get("channel", "fiber_loss_db_per_km", &mut ch.fiber_loss_db_per_km)?;
        r.get("channel", "other_loss", &mut ch.other_loss)?;
        r.get("channel", "misalignment", &mut ch.misalignment)?;
        r.get("channel", "dark_count", &mut ch.dark_count)?;
        r.get("channel", "ec_efficiency", &mut ch.ec_efficiency)?;
        if let Some(list) = r.raw("source", "phases") {
            c.phases = parse_phases(list)?;
        }
        r.get("sweep", "start_km", &mut c.start_km)?;
        r.get("sweep", "stop_km", &mut c.stop_km)?;
        r.get("sweep", "step_km", &mut c.step_km)?;
        r.get("noise", "e11b_start", &mut c.e11b_start)?;
        r.get("noise", "e11b_stop", &mut c.e11b_stop)?;
        r.get("noise", "e11b_step", &mut c.e11b_step)?;
        r.get("intensity", "mu_min", &mut c.grid.mu_min)?;
        r.get("intensity", "mu_max", &mut c.grid.mu_max)?;
        r.get("intensity", "nu_min", &mut c.grid.nu_min)?;
        r.get("intensity", "points", &mut c.grid.points)?;
        let (mut mu, mut nu) = (c.intensities.signal, c.intensities.decoy);
        r.get("intensity", "mu", &mut mu)?;
        r.get("intensity", "nu", &mut nu)?;
        c.intensities = IntensitySettings::new(mu, nu)?;
        let est = &mut c.estimation;
        r.get("estimation", "truncation_k", &mut est.truncation)?;
        r.get("estimation", "num_decoys_m", &mut est.num_decoys)?;
        if let Some(raw) = r.raw("estimation", "epsilon_override") {
            est.epsilon_override = Some(raw.parse().map_err(|e| anyhow!("epsilon_override {raw:?}: {e}"))?);
        }
        if let Some(raw) = r.raw("estimation", "tail_model") {
            est.tail = match raw.to_ascii_lowercase().as_str() {
                "coupled" => TailModel::SignalCoupled,
                "independent" => TailModel::Independent,
                other => bail!("tail_model {other:?}: expected coupled or independent"),
            };
        }
        r.get("series", "relative_term_cutoff", &mut est.series.relative_term_cutoff)?;
        r.get("series", "max_terms", &mut est.series.max_terms)?;
        if let Some(p) = r.raw("output", "path") {
            c.output = Some(PathBuf::from(p));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.grid.validate()?;
        self.estimation.validate()?;
        if self.phases.is_empty() {
            bail!("phases list is empty");
        }
        self.distances()?;
        self.noise_levels()?;
        Ok(())
    }

    pub fn distances(&self) -> Result<Vec<f64>> {
        linear_grid(self.start_km, self.stop_km, self.step_km).context("[sweep]")
    }

    pub fn noise_levels(&self) -> Result<Vec<f64>> {
        let v = linear_grid(self.e11b_start, self.e11b_stop, self.e11b_step).context("[noise]")?;
        if v.iter().any(|e| !(0.0..=1.0).contains(e)) {
            bail!("[noise] e11b values must lie in [0, 1]");
        }
        Ok(v)
    }

    pub fn series(&self) -> SeriesPolicy {
        self.estimation.series
    }
}
