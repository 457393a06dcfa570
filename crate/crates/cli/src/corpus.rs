//! Synthetic corpora on disk: gather files per split plus a JSON manifest.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/train/00000.fbg ...
//! <dir>/val/...  <dir>/test/...
//! <dir>/test-clean/...   noiseless copies of the test gathers
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fbpick_seismic::pipeline::estimate_lmo_gathers;
use fbpick_seismic::{inject_noise, read_gather, synth_gather, write_gather, Gather, JumpSpec, LmoParams, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SynthConfig};
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "fbpick-corpus-1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatherEntry {
    /// Relative to the corpus directory.
    pub file: String,
    pub split: Split,
    pub survey: String,
    pub snr_db: f64,
    /// Noiseless copy, kept for test gathers only.
    #[serde(default)]
    pub clean: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    /// Reference line per survey, estimated from sparse training picks.
    pub lmo: BTreeMap<String, LmoParams>,
    pub gathers: Vec<GatherEntry>,
    pub generation: SynthConfig,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::data(path.display(), e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::data(path.display(), e))?;
        if m.format != FORMAT {
            return Err(CliError::data(path.display(), format!("unknown corpus format {:?}", m.format)));
        }
        Ok(m)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &GatherEntry> {
        self.gathers.iter().filter(move |g| g.split == split)
    }
}

/// Loaded gathers of one split with their reference lines.
pub struct SplitData {
    pub names: Vec<String>,
    pub gathers: Vec<Gather>,
    pub lmo: Vec<LmoParams>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.gathers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gathers.is_empty()
    }

    pub fn pairs(&self) -> Vec<(Gather, LmoParams)> {
        self.gathers.iter().cloned().zip(self.lmo.iter().copied()).collect()
    }
}

/// Reference line of a survey: the config wins over the manifest.
pub fn resolve_lmo(config: &RunConfig, manifest: Option<&Manifest>, survey: &str) -> Result<LmoParams> {
    config
        .lmo
        .get(survey)
        .or_else(|| manifest.and_then(|m| m.lmo.get(survey)))
        .copied()
        .ok_or_else(|| CliError::Data(format!("no LMO parameters for survey {survey:?}")))
}

/// Reads every gather of `split`; `clean` selects the noiseless test copies.
pub fn load_split(config: &RunConfig, split: Split, clean: bool) -> Result<SplitData> {
    let dir = &config.paths.data_dir;
    let manifest = Manifest::load(dir)?;
    let mut out = SplitData {
        names: Vec::new(),
        gathers: Vec::new(),
        lmo: Vec::new(),
    };
    for e in manifest.entries(split) {
        let file = if clean {
            e.clean
                .as_ref()
                .ok_or_else(|| CliError::Data(format!("{} has no clean copy", e.file)))?
        } else {
            &e.file
        };
        let path = dir.join(file);
        let g = read_gather(&path).map_err(|err| CliError::data(path.display(), err))?;
        out.lmo.push(resolve_lmo(config, Some(&manifest), &g.survey_id)?);
        out.names.push(e.file.clone());
        out.gathers.push(g);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("corpus has no {} gathers", split.dir())));
    }
    Ok(out)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

/// Writes a corpus into `dir`. Refuses a non-empty directory unless `force`.
pub fn synthesize(config: &SynthConfig, dir: &Path, force: bool) -> Result<Manifest> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .map_err(|e| CliError::data(dir.display(), e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(CliError::Usage(format!(
                "{} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
        if non_empty {
            for sub in ["train", "val", "test", "test-clean", MANIFEST] {
                let p = dir.join(sub);
                let r = if p.is_dir() { fs::remove_dir_all(&p) } else { fs::remove_file(&p) };
                if p.exists() {
                    r.map_err(|e| CliError::data(p.display(), e))?;
                }
            }
        }
    }
    let io = |p: &Path, e: std::io::Error| CliError::data(p.display(), e);
    for sub in ["train", "val", "test", "test-clean"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| io(&p, e))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let total = config.train + config.val + config.test;
    let mut entries = Vec::with_capacity(total);
    let mut sparse: BTreeMap<String, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    for i in 0..total {
        let split = if i < config.train {
            Split::Train
        } else if i < config.train + config.val {
            Split::Val
        } else {
            Split::Test
        };
        let survey = &config.surveys[i % config.surveys.len()];
        let spec = SynthSpec {
            survey_id: survey.name.clone(),
            n_traces: config.n_traces,
            n_samples: config.n_samples,
            dt: config.dt,
            velocity: survey.velocity * (1.0 + config.velocity_jitter * normal(&mut rng)),
            t0: (survey.t0 + config.t0_jitter * normal(&mut rng)).max(0.0),
            first_offset: config.first_offset,
            offset_spacing: config.offset_spacing,
            frequency: rng.random_range(config.frequency[0]..=config.frequency[1]),
            jumps: JumpSpec {
                count: config.jump_count,
                max_samples: config.jump_max_samples,
            },
            reflections: config.reflections,
            seed: rng.random(),
        };
        let clean = synth_gather(&spec)?;
        let snr = rng.random_range(config.snr_db[0]..=config.snr_db[1]);
        let noisy = inject_noise(&clean, snr, rng.random());

        let name = format!("{}/{i:05}.fbg", split.dir());
        let path = dir.join(&name);
        write_gather(&noisy, &path).map_err(|e| CliError::data(path.display(), e))?;
        let clean_name = (split == Split::Test).then(|| format!("test-clean/{i:05}.fbg"));
        if let Some(c) = &clean_name {
            let p = dir.join(c);
            write_gather(&clean, &p).map_err(|e| CliError::data(p.display(), e))?;
        }

        let fits = sparse.entry(survey.name.clone()).or_default();
        if split == Split::Train && fits.len() < config.lmo_gathers {
            let step = config.lmo_trace_step.max(1);
            fits.push(noisy.pick_times().into_iter().step_by(step).collect());
        }
        entries.push(GatherEntry {
            file: name,
            split,
            survey: survey.name.clone(),
            snr_db: snr,
            clean: clean_name,
        });
    }

    let mut lmo = BTreeMap::new();
    for s in &config.surveys {
        let fits = sparse
            .get(&s.name)
            .filter(|f| !f.is_empty())
            .ok_or_else(|| CliError::Usage(format!("survey {} has no training gathers to fit LMO on", s.name)))?;
        lmo.insert(s.name.clone(), estimate_lmo_gathers(fits)?);
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        lmo,
        gathers: entries,
        generation: config.clone(),
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
    Ok(manifest)
}

/// Gather files named on the command line, or the whole test split.
pub fn input_files(config: &RunConfig, inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if !inputs.is_empty() {
        return Ok(inputs.to_vec());
    }
    let m = Manifest::load(&config.paths.data_dir)?;
    Ok(m.entries(Split::Test).map(|e| config.paths.data_dir.join(&e.file)).collect())
}
