//! Subcommand implementations. Every invocation regenerates its inputs from
//! the config, so outputs depend on nothing but the config and `--bin`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use faer::Col;
use koopvar::bounds::{bounds_table, dictionary_constants, estimate_upsilon, write_bounds_csv, ConcentrationInputs};
use koopvar::c64;
use koopvar::dictionary::{median_pairwise_distance, pick_centers, Dictionary};
use koopvar::forecast::{deltas_from_reference, estimate_operator_norm, forecast_report, write_forecast_csv};
use koopvar::matrices::{assemble_batched, assemble_unbatched, AssemblyMeta, KoopmanMatrices};
use koopvar::pseudospectra::{pseudospectrum, ComplexGrid, ResidualKind};
use koopvar::rng::{uniform, SeedStream};
use koopvar::snapshots::{
    bin_to_batched, load_snapshots, periodic_trapezoid_weights, write_snapshot_data, BatchedSnapshotSet,
    BinningSpec, SnapshotData, SnapshotSet,
};
use koopvar::spectral::{analyze, write_eigs_csv, RegularizationPolicy};
use koopvar::systems::{
    circle_lipschitz, circle_reference, generate_circle_batched, vdp_batched_from_trajectory, CircleMapConfig,
    VdpConfig,
};
use serde::Serialize;

use crate::config::{BoundsSpec, DictionarySpec, GridSpec, LoadedConfig, SystemSpec, WeightsScheme};
use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_hex, Manifest, MANIFEST};
use crate::Command;

struct Analysis {
    dictionary: Dictionary,
    mats: KoopmanMatrices,
}

pub struct Session<'a> {
    cfg: &'a LoadedConfig,
    bin: Option<(String, BinningSpec)>,
    out: PathBuf,
    reg: RegularizationPolicy,
    data: Option<SnapshotData>,
    analysis: Option<Analysis>,
    files: BTreeMap<String, String>,
    skipped: BTreeMap<String, String>,
    substreams: BTreeSet<String>,
}

#[derive(Serialize)]
struct MatricesSidecar<'a> {
    dictionary: String,
    #[serde(rename = "N")]
    size: usize,
    has_h: bool,
    meta: &'a AssemblyMeta,
}

impl<'a> Session<'a> {
    pub fn new(cfg: &'a LoadedConfig, bin: Option<(String, BinningSpec)>, out: PathBuf) -> CliResult<Self> {
        let reg = RegularizationPolicy::new(cfg.config.analysis.rel_cutoff)?;
        Ok(Self {
            cfg,
            bin,
            out,
            reg,
            data: None,
            analysis: None,
            files: BTreeMap::new(),
            skipped: BTreeMap::new(),
            substreams: BTreeSet::new(),
        })
    }

    pub fn run(&mut self, command: Command) -> CliResult<()> {
        std::fs::create_dir_all(&self.out)?;
        match command {
            Command::Simulate => self.simulate(),
            Command::Matrices => self.matrices(),
            Command::Eigs => self.eigs(),
            Command::Pseudospec => self.pseudospec(ResidualKind::Residual),
            Command::VarPseudospec => self.pseudospec(ResidualKind::VarianceResidual),
            Command::Forecast => self.forecast(),
            Command::Bounds => self.bounds(true),
            Command::All => self.all(),
            Command::Verify => unreachable!("handled before a session is opened"),
        }?;
        self.finish()
    }

    fn all(&mut self) -> CliResult<()> {
        self.simulate()?;
        self.matrices()?;
        self.eigs()?;
        self.pseudospec(ResidualKind::VarianceResidual)?;
        match self.pseudospec(ResidualKind::Residual) {
            Err(CliError::Core { err: err @ koopvar::Error::Capability(_), hint }) => {
                let reason = match hint {
                    Some(h) => format!("{err} ({h})"),
                    None => err.to_string(),
                };
                eprintln!("skipping pseudospec.csv: {reason}");
                self.skipped.insert("pseudospec.csv".into(), reason);
            }
            other => other?,
        }
        self.forecast()?;
        self.bounds(false)
    }

    fn emit(&mut self, name: &str, bytes: Vec<u8>) -> CliResult<()> {
        let path = self.out.join(name);
        std::fs::write(&path, &bytes)?;
        self.files.insert(name.to_string(), sha256_hex(&bytes));
        self.skipped.remove(name);
        println!("wrote {}", path.display());
        Ok(())
    }

    fn finish(&mut self) -> CliResult<()> {
        let mut manifest = Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            core_version: koopvar::VERSION.to_string(),
            config_sha256: sha256_hex(&self.cfg.raw),
            seed: self.cfg.config.sampling.seed,
            substreams: self.substreams.iter().cloned().collect(),
            bin: self.bin.as_ref().map(|(text, _)| text.clone()),
            files: std::mem::take(&mut self.files),
            skipped: std::mem::take(&mut self.skipped),
        };
        if self.out.join(MANIFEST).exists() {
            if let Ok(previous) = Manifest::read(&self.out) {
                manifest.merge_previous(previous);
            }
        }
        manifest.write(&self.out)
    }

    // -----------------------------------------------------------------------
    // Inputs
    // -----------------------------------------------------------------------

    fn circle_config(&self) -> Option<CircleMapConfig> {
        match self.cfg.config.system {
            SystemSpec::Circle { c, amp, noise_sigma } => {
                Some(CircleMapConfig { c, amp, noise_sigma, seed: self.cfg.config.sampling.seed.unwrap_or_default() })
            }
            _ => None,
        }
    }

    fn data(&mut self) -> CliResult<&SnapshotData> {
        if self.data.is_none() {
            let raw = self.load_data()?;
            let data = match (&self.bin, raw) {
                (Some((_, spec)), SnapshotData::Unbatched(set)) => SnapshotData::Batched(bin_to_batched(&set, spec)?),
                (Some(_), SnapshotData::Batched(_)) => {
                    return Err(CliError::config("--bin applies to unbatched data only"));
                }
                (None, d) => d,
            };
            self.data = Some(data);
        }
        Ok(self.data.as_ref().expect("just set"))
    }

    fn load_data(&mut self) -> CliResult<SnapshotData> {
        let sampling = &self.cfg.config.sampling;
        match &self.cfg.config.system {
            SystemSpec::Circle { .. } => {
                let cfg = self.circle_config().expect("circle system");
                let m1 = sampling.m1.expect("validated");
                let m2 = sampling.m2.unwrap_or(1);
                self.substreams.insert("simulate".into());
                let batched = generate_circle_batched(&cfg, m1, m2)?;
                Ok(if m2 == 1 { SnapshotData::Unbatched(batched.flatten()) } else { SnapshotData::Batched(batched) })
            }
            &SystemSpec::Vdp { mu, delta, em_step, koopman_dt, burn_in } => {
                let cfg = VdpConfig { mu, delta, em_step, koopman_dt, burn_in, seed: self.cfg.seed("simulation")? };
                self.substreams.extend(["simulate".into(), "batch".into()]);
                let batched = vdp_batched_from_trajectory(&cfg, sampling.m1.expect("validated"))?;
                Ok(match sampling.m2.unwrap_or(2) {
                    1 => SnapshotData::Unbatched(SnapshotSet::new(
                        batched.states_x().clone(),
                        batched.realizations()[0].clone(),
                        batched.weights().to_vec(),
                    )?),
                    _ => SnapshotData::Batched(batched),
                })
            }
            SystemSpec::File { path } => {
                let data = load_snapshots(self.cfg.resolve(path))?;
                reweight(data, sampling.weights.as_ref())
            }
        }
    }

    fn states(&mut self) -> CliResult<usize> {
        Ok(match self.data()? {
            SnapshotData::Unbatched(s) => s.len(),
            SnapshotData::Batched(b) => b.len(),
        })
    }

    fn analysis(&mut self) -> CliResult<&Analysis> {
        if self.analysis.is_none() {
            let dictionary = self.dictionary()?;
            let mats = match self.data()? {
                SnapshotData::Unbatched(s) => assemble_unbatched(s, &dictionary)?,
                SnapshotData::Batched(b) => assemble_batched(b, &dictionary)?,
            };
            self.analysis = Some(Analysis { dictionary, mats });
        }
        Ok(self.analysis.as_ref().expect("just set"))
    }

    fn dictionary(&mut self) -> CliResult<Dictionary> {
        match self.cfg.config.dictionary.clone() {
            DictionarySpec::Fourier { n, period } => Ok(Dictionary::fourier(n, period)?),
            DictionarySpec::LaplacianRbf { centers, scale } => {
                let seed = self.cfg.seed("RBF center selection")?;
                self.substreams.insert("centers".into());
                let states = match self.data()? {
                    SnapshotData::Unbatched(s) => s.states_x().clone(),
                    SnapshotData::Batched(b) => b.states_x().clone(),
                };
                let c = pick_centers(states.as_ref(), centers, seed)?;
                let scale = match scale {
                    Some(s) => s,
                    None => median_pairwise_distance(c.as_ref())?,
                };
                Ok(Dictionary::laplacian_rbf(c, scale)?)
            }
        }
    }

    // -----------------------------------------------------------------------
    // Subcommands
    // -----------------------------------------------------------------------

    fn simulate(&mut self) -> CliResult<()> {
        let mut buf = Vec::new();
        write_snapshot_data(self.data()?, &mut buf)?;
        self.emit("snapshots.csv", buf)
    }

    fn matrices(&mut self) -> CliResult<()> {
        let a = self.analysis()?;
        let mut bin = Vec::new();
        a.mats.write_binary(&mut bin)?;
        let sidecar = MatricesSidecar {
            dictionary: a.dictionary.describe(),
            size: a.mats.size(),
            has_h: a.mats.h().is_some(),
            meta: a.mats.meta(),
        };
        let json = pretty(&sidecar)?;
        self.emit("matrices.bin", bin)?;
        self.emit("matrices.json", json)
    }

    fn eigs(&mut self) -> CliResult<()> {
        let reg = self.reg;
        let pairs = analyze(&self.analysis()?.mats, &reg)?;
        let mut buf = Vec::new();
        write_eigs_csv(&pairs, &mut buf)?;
        self.emit("eigs.csv", buf)
    }

    fn grid(&self, size: usize) -> CliResult<ComplexGrid> {
        Ok(match &self.cfg.config.analysis.grid {
            GridSpec::Default => ComplexGrid::default_grid(size)?,
            GridSpec::Rectangle { re, im, steps } => {
                ComplexGrid::rectangle((re[0], re[1]), (im[0], im[1]), (steps[0], steps[1]))?
            }
            GridSpec::Explicit { points } => {
                ComplexGrid::explicit(points.iter().map(|p| c64::new(p[0], p[1])).collect())?
            }
        })
    }

    fn pseudospec(&mut self, kind: ResidualKind) -> CliResult<()> {
        let (epsilon, reg) = (self.cfg.config.analysis.epsilon, self.reg);
        let size = self.analysis()?.mats.size();
        let grid = self.grid(size)?;
        let a = self.analysis()?;
        let result = pseudospectrum(&grid, &a.mats, epsilon, kind, &reg).map_err(|e| CliError::from(e).with_res_hint())?;
        let sidecar = pretty(&result.sidecar(&a.dictionary.describe()))?;
        let mut csv = Vec::new();
        result.write_csv(&mut csv)?;
        let stem = match kind {
            ResidualKind::Residual => "pseudospec",
            ResidualKind::VarianceResidual => "var_pseudospec",
        };
        self.emit(&format!("{stem}.csv"), csv)?;
        self.emit(&format!("{stem}.json"), sidecar)
    }

    fn forecast(&mut self) -> CliResult<()> {
        let spec = self.cfg.config.analysis.clone();
        let reg = self.reg;
        let circle = self.circle_config();
        let fourier_n = match self.cfg.config.dictionary {
            DictionarySpec::Fourier { n, period } if period == 1.0 => Some(n),
            _ => None,
        };
        let a = self.analysis()?;
        let labels = a.dictionary.labels();
        let index = match &spec.observable {
            None => 0,
            Some(label) => labels.iter().position(|l| l == label).ok_or_else(|| {
                CliError::config(format!("observable `{label}` is not a dictionary label; known: {}", labels.join(", ")))
            })?,
        };
        let g = Col::from_fn(a.mats.size(), |i| c64::new(if i == index { 1.0 } else { 0.0 }, 0.0));
        let norm_k = match spec.norm_k {
            Some(v) => v,
            None => estimate_operator_norm(&a.mats, &reg)?,
        };
        // Closed-form references exist for the unperturbed circle map.
        let deltas = match (circle, fourier_n) {
            (Some(c), Some(n)) if c.amp == 0.0 => {
                Some(deltas_from_reference(&a.mats, &circle_reference(&c, n)?, norm_k)?)
            }
            _ => None,
        };
        let mut note = None;
        let rows = match forecast_report(&a.mats, &reg, g.as_ref(), spec.horizon, norm_k, deltas) {
            Err(koopvar::Error::Domain(msg)) if deltas.is_some() => {
                note = Some(format!("C_n column left empty: {msg}"));
                forecast_report(&a.mats, &reg, g.as_ref(), spec.horizon, norm_k, None)?
            }
            other => other?,
        };
        let mut buf = Vec::new();
        write_forecast_csv(&rows, &mut buf)?;
        self.emit("forecast.csv", buf)?;
        if let Some(n) = note {
            eprintln!("{n}");
            self.skipped.insert("forecast.csv:C_n".into(), n);
        }
        Ok(())
    }

    /// `required` turns missing constants into an error instead of a skip.
    fn bounds(&mut self, required: bool) -> CliResult<()> {
        let spec = self.cfg.config.bounds.clone().unwrap_or_default();
        let constants = match self.bound_constants(&spec) {
            Ok(c) => c,
            Err(e) if !required => {
                eprintln!("skipping bounds.csv: {e}");
                self.skipped.insert("bounds.csv".into(), e.to_string());
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let (c, upsilon) = constants;
        let ms = match &spec.ms {
            Some(ms) => ms.clone(),
            None => vec![self.states()?],
        };
        let dict = &self.analysis()?.dictionary;
        let (alpha, beta) = dictionary_constants(dict)?;
        let base = ConcentrationInputs { m: 1, n: dict.len(), t: 1.0, upsilon, c, alpha, beta };
        let rows = bounds_table(&base, &ms, &spec.ts)?;
        let mut buf = Vec::new();
        write_bounds_csv(&rows, &mut buf)?;
        self.emit("bounds.csv", buf)
    }

    /// Lipschitz constant and Orlicz norm: from the config, or derived for
    /// the circle map.
    fn bound_constants(&mut self, spec: &BoundsSpec) -> CliResult<(f64, f64)> {
        let circle = self.circle_config();
        let c = match (spec.lipschitz, circle) {
            (Some(c), _) => c,
            (None, Some(cfg)) => circle_lipschitz(&cfg),
            (None, None) => return Err(CliError::config("bounds need bounds.lipschitz for this system")),
        };
        let upsilon = match (spec.upsilon, circle) {
            (Some(u), _) => u,
            (None, Some(cfg)) => {
                let seed = self.cfg.seed("the Orlicz norm estimate")?;
                self.substreams.insert("bounds".into());
                let mut rng = SeedStream::new(seed, "bounds").stream(0);
                let samples: Vec<Vec<f64>> = (0..spec.upsilon_samples)
                    .map(|_| vec![uniform(&mut rng), cfg.noise_sigma * uniform(&mut rng)])
                    .collect();
                estimate_upsilon(&samples)?
            }
            (None, None) => return Err(CliError::config("bounds need bounds.upsilon for this system")),
        };
        Ok((c, upsilon))
    }
}

fn pretty<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn reweight(data: SnapshotData, scheme: Option<&WeightsScheme>) -> CliResult<SnapshotData> {
    let len = match &data {
        SnapshotData::Unbatched(s) => s.len(),
        SnapshotData::Batched(b) => b.len(),
    };
    let weights = match scheme {
        None | Some(WeightsScheme::File) => return Ok(data),
        Some(WeightsScheme::Uniform) => vec![1.0 / len as f64; len],
        Some(WeightsScheme::Trapezoid { domain_length }) => periodic_trapezoid_weights(len, *domain_length)?,
    };
    Ok(match data {
        SnapshotData::Unbatched(s) => {
            SnapshotData::Unbatched(SnapshotSet::new(s.states_x().clone(), s.states_y().clone(), weights)?)
        }
        SnapshotData::Batched(b) => SnapshotData::Batched(BatchedSnapshotSet::new(
            b.states_x().clone(),
            b.realizations().to_vec(),
            weights,
        )?),
    })
}
