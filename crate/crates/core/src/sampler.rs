//! Systematic-scan Gibbs sampling and the text sample-file format.

use std::fmt::Write as _;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, SubsetGeometry, SubsetSpec};
use crate::model::{logistic, Configuration, PairwiseModel, Spin};

pub const RNG_ALGORITHM: &str = "ChaCha8";
pub const SCAN_ORDER: &str = "raster";
pub const DEFAULT_BURN_IN: usize = 2000;
pub const DEFAULT_SPACING: usize = 50;

const MAGIC: &str = "MCDL-SAMPLES";
const VERSION: &str = "v1";

/// One pass over every node in ascending index order, each resampled from
/// its conditional given the current neighbor values.
pub fn gibbs_sweep<R: Rng>(model: &PairwiseModel, x: &mut [Spin], rng: &mut R) {
    for node in 0..x.len() {
        let p_plus = logistic(2.0 * model.local_field(x, node));
        x[node] = if rng.gen::<f64>() < p_plus { 1 } else { -1 };
    }
}

/// A single chain with its own generator state.
pub struct GibbsChain<'m> {
    model: &'m PairwiseModel,
    rng: ChaCha8Rng,
    state: Configuration,
}

impl<'m> GibbsChain<'m> {
    /// Starts from an independent uniform spin at every node.
    pub fn new(model: &'m PairwiseModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = (0..model.graph().node_count())
            .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
            .collect();
        GibbsChain { model, rng, state }
    }

    pub fn sweep(&mut self) {
        gibbs_sweep(self.model, &mut self.state, &mut self.rng);
    }

    pub fn run(&mut self, sweeps: usize) {
        for _ in 0..sweeps {
            self.sweep();
        }
    }

    pub fn state(&self) -> &[Spin] {
        &self.state
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub burn_in: usize,
    pub spacing: usize,
    pub scan: String,
    pub rng: String,
    pub subset: SubsetSpec,
}

impl Provenance {
    fn line(&self) -> String {
        format!(
            "# seed={} burn_in={} spacing={} scan={} rng={} subset={}",
            self.seed, self.burn_in, self.spacing, self.scan, self.rng, self.subset
        )
    }

    fn parse(line: &str, lineno: usize) -> Result<Self> {
        let err = |message: String| Error::SampleFile {
            line: lineno,
            message,
        };
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| err("provenance line must start with `#`".into()))?;
        let (mut seed, mut burn_in, mut spacing, mut scan, mut rng, mut subset) =
            (None, None, None, None, None, None);
        for token in body.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| err(format!("malformed provenance token `{token}`")))?;
            let num = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| err(format!("bad number for `{key}`: `{v}`")))
            };
            match key {
                "seed" => seed = Some(num(value)?),
                "burn_in" => burn_in = Some(num(value)? as usize),
                "spacing" => spacing = Some(num(value)? as usize),
                "scan" => scan = Some(value.to_string()),
                "rng" => rng = Some(value.to_string()),
                "subset" => subset = Some(value.parse().map_err(|e: Error| err(e.to_string()))?),
                _ => {}
            }
        }
        let missing = |k: &str| err(format!("provenance lacks `{k}`"));
        Ok(Provenance {
            seed: seed.ok_or_else(|| missing("seed"))?,
            burn_in: burn_in.ok_or_else(|| missing("burn_in"))?,
            spacing: spacing.ok_or_else(|| missing("spacing"))?,
            scan: scan.ok_or_else(|| missing("scan"))?,
            rng: rng.ok_or_else(|| missing("rng"))?,
            subset: subset.ok_or_else(|| missing("subset"))?,
        })
    }
}

/// Configurations restricted to a closure, listed in ascending node order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSequence {
    geometry: SubsetGeometry,
    configs: Vec<Configuration>,
    provenance: Provenance,
}

impl SampleSequence {
    pub fn new(
        geometry: SubsetGeometry,
        configs: Vec<Configuration>,
        provenance: Provenance,
    ) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::InvalidArgument("sample sequence is empty".into()));
        }
        for c in &configs {
            if c.len() != geometry.closure().len() {
                return Err(Error::LengthMismatch {
                    what: "sample configuration",
                    expected: geometry.closure().len(),
                    actual: c.len(),
                });
            }
            crate::model::check_spins(c)?;
        }
        Ok(SampleSequence {
            geometry,
            configs,
            provenance,
        })
    }

    pub fn geometry(&self) -> &SubsetGeometry {
        &self.geometry
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Expands the closure of sample `index` onto a full-graph vector;
    /// nodes outside the closure are 0 (unassigned).
    pub fn full_config(&self, index: usize, node_count: usize) -> Configuration {
        let mut full = vec![0; node_count];
        for (&n, &s) in self.geometry.closure().iter().zip(&self.configs[index]) {
            full[n] = s;
        }
        full
    }

    pub fn write_to<W: Write>(&self, graph: &Graph, mut out: W) -> Result<()> {
        out.write_all(self.to_text(graph)?.as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self, graph: &Graph) -> Result<String> {
        let shape = graph.grid().ok_or(Error::MissingGrid)?;
        let closure = self.geometry.closure().len();
        let mut text = String::with_capacity((closure + 1) * (self.configs.len() + 2));
        writeln!(
            text,
            "{MAGIC} {VERSION} {} {} {} {closure}",
            shape.height,
            shape.width,
            self.configs.len()
        )
        .expect("write to string");
        text.push_str(&self.provenance.line());
        text.push('\n');
        for c in &self.configs {
            text.extend(c.iter().map(|&s| if s > 0 { '+' } else { '-' }));
            text.push('\n');
        }
        Ok(text)
    }

    /// Parses a sample file; the subset named in the provenance line is
    /// resolved against `graph` to recover the closure.
    pub fn parse(text: &str, graph: &Graph) -> Result<Self> {
        let shape = graph.grid().ok_or(Error::MissingGrid)?;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, message: String| Error::SampleFile { line, message };

        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != MAGIC || fields[1] != VERSION {
            return Err(err(1, format!("bad header `{header}`")));
        }
        let nums: Vec<usize> = fields[2..]
            .iter()
            .map(|f| {
                f.parse()
                    .map_err(|_| err(1, format!("bad header field `{f}`")))
            })
            .collect::<Result<_>>()?;
        let (height, width, n, closure_len) = (nums[0], nums[1], nums[2], nums[3]);
        if (height, width) != (shape.height, shape.width) {
            return Err(err(
                1,
                format!(
                    "samples are for a {height}x{width} grid, model is {}x{}",
                    shape.height, shape.width
                ),
            ));
        }

        let (pl, prov_line) = lines
            .next()
            .ok_or_else(|| err(2, "missing provenance line".into()))?;
        let provenance = Provenance::parse(prov_line, pl)?;
        let geometry = provenance
            .subset
            .geometry(graph)
            .map_err(|e| err(pl, e.to_string()))?;
        if geometry.closure().len() != closure_len {
            return Err(err(
                1,
                format!(
                    "header closure size {closure_len} disagrees with subset `{}` ({})",
                    provenance.subset,
                    geometry.closure().len()
                ),
            ));
        }

        let mut configs = Vec::with_capacity(n);
        for (lineno, line) in lines {
            if line.is_empty() {
                continue;
            }
            let config = line
                .chars()
                .map(|ch| match ch {
                    '+' => Ok(1),
                    '-' => Ok(-1),
                    other => Err(err(lineno, format!("unexpected character `{other}`"))),
                })
                .collect::<Result<Vec<Spin>>>()?;
            if config.len() != closure_len {
                return Err(err(
                    lineno,
                    format!("expected {closure_len} spins, got {}", config.len()),
                ));
            }
            configs.push(config);
        }
        if configs.len() != n {
            return Err(err(
                0,
                format!(
                    "header promises {n} configurations, found {}",
                    configs.len()
                ),
            ));
        }
        Self::new(geometry, configs, provenance)
    }
}

/// Runs one chain: `burn_in` sweeps from a uniform start, then records the
/// closure every `spacing` sweeps until `n` configurations are collected.
pub fn sample_sequence(
    model: &PairwiseModel,
    subset: &SubsetSpec,
    n: usize,
    burn_in: usize,
    spacing: usize,
    seed: u64,
) -> Result<SampleSequence> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if spacing == 0 {
        return Err(Error::InvalidArgument("spacing must be at least 1".into()));
    }
    let geometry = subset.geometry(model.graph())?;
    let mut chain = GibbsChain::new(model, seed);
    chain.run(burn_in);
    let mut configs = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            chain.run(spacing);
        }
        let state = chain.state();
        configs.push(geometry.closure().iter().map(|&v| state[v]).collect());
    }
    let provenance = Provenance {
        seed,
        burn_in,
        spacing,
        scan: SCAN_ORDER.into(),
        rng: RNG_ALGORITHM.into(),
        subset: subset.clone(),
    };
    SampleSequence::new(geometry, configs, provenance)
}

/// Convenience for writing sample files to disk.
pub fn write_samples_file(
    path: &std::path::Path,
    graph: &Graph,
    samples: &SampleSequence,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = io::BufWriter::new(file);
    samples.write_to(graph, &mut out)?;
    out.flush()?;
    Ok(())
}
