//! Dense benchmark surfaces: CSV ingestion, export and synthetic generation.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{GenboError, Result};
use crate::fingerprint::Fingerprint;
use crate::model::{ParameterPoint, TaskPoint};

pub const SURFACE_HEADER: [&str; 5] = ["x_id", "w_id", "y", "x_bits", "w_bits"];

/// Complete tabulated oracle `f(x, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupSurface {
    parameters: Vec<ParameterPoint>,
    tasks: Vec<TaskPoint>,
    // row-major [x][w]
    values: Vec<f64>,
    x_index: HashMap<String, usize>,
    w_index: HashMap<String, usize>,
}

impl LookupSurface {
    /// `values[x][w]` must be a complete, finite table.
    pub fn new(parameters: Vec<ParameterPoint>, tasks: Vec<TaskPoint>, values: Vec<Vec<f64>>) -> Result<Self> {
        if parameters.is_empty() || tasks.is_empty() {
            return Err(GenboError::invalid("surface needs at least one condition and one task"));
        }
        let x_index = index_ids(parameters.iter().map(|p| p.id.as_str()))?;
        let w_index = index_ids(tasks.iter().map(|t| t.id.as_str()))?;
        check_uniform_width(parameters.iter().map(|p| (&p.id, &p.features)))?;
        check_uniform_width(tasks.iter().map(|t| (&t.id, &t.features)))?;
        if values.len() != parameters.len() {
            return Err(GenboError::invalid("value table row count differs from condition count"));
        }
        let mut flat = Vec::with_capacity(parameters.len() * tasks.len());
        for (xi, row) in values.iter().enumerate() {
            if row.len() != tasks.len() {
                let wi = row.len().min(tasks.len() - 1);
                return Err(GenboError::MissingCell {
                    x_id: parameters[xi].id.clone(),
                    w_id: tasks[wi].id.clone(),
                });
            }
            for (wi, &y) in row.iter().enumerate() {
                if !y.is_finite() {
                    return Err(GenboError::NonFinite {
                        x_id: parameters[xi].id.clone(),
                        w_id: tasks[wi].id.clone(),
                        value: y,
                    });
                }
                flat.push(y);
            }
        }
        Ok(LookupSurface { parameters, tasks, values: flat, x_index, w_index })
    }

    pub fn parameters(&self) -> &[ParameterPoint] {
        &self.parameters
    }

    pub fn tasks(&self) -> &[TaskPoint] {
        &self.tasks
    }

    pub fn n_parameters(&self) -> usize {
        self.parameters.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn parameter_index(&self, id: &str) -> Result<usize> {
        self.x_index.get(id).copied().ok_or_else(|| GenboError::UnknownId(id.to_string()))
    }

    pub fn task_index(&self, id: &str) -> Result<usize> {
        self.w_index.get(id).copied().ok_or_else(|| GenboError::UnknownId(id.to_string()))
    }

    /// Tabulated value by index. Panics on out-of-range indices.
    #[inline]
    pub fn value(&self, x: usize, w: usize) -> f64 {
        assert!(x < self.parameters.len() && w < self.tasks.len());
        self.values[x * self.tasks.len() + w]
    }

    /// Tabulated value by id. No noise is added.
    pub fn resolve(&self, x_id: &str, w_id: &str) -> Result<f64> {
        match (self.x_index.get(x_id), self.w_index.get(w_id)) {
            (Some(&x), Some(&w)) => Ok(self.value(x, w)),
            _ => Err(GenboError::MissingCell { x_id: x_id.to_string(), w_id: w_id.to_string() }),
        }
    }

    /// Applies `f` to every cell.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> LookupSurface {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn parameter_fingerprints(&self) -> Vec<Fingerprint> {
        self.parameters.iter().map(|p| p.features.clone()).collect()
    }

    pub fn task_fingerprints(&self) -> Vec<Fingerprint> {
        self.tasks.iter().map(|t| t.features.clone()).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(SURFACE_HEADER)?;
        for (xi, p) in self.parameters.iter().enumerate() {
            let xh = p.features.to_hex();
            for (wi, t) in self.tasks.iter().enumerate() {
                wtr.write_record([
                    p.id.as_str(),
                    t.id.as_str(),
                    &self.value(xi, wi).to_string(),
                    &xh,
                    &t.features.to_hex(),
                ])?;
            }
        }
        wtr.flush().map_err(|e| GenboError::io("<writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| GenboError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn index_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id.to_string(), i).is_some() {
            return Err(GenboError::DuplicateId(id.to_string()));
        }
    }
    Ok(map)
}

fn check_uniform_width<'a>(items: impl Iterator<Item = (&'a String, &'a Fingerprint)>) -> Result<()> {
    let mut width = None;
    for (id, fp) in items {
        match width {
            None => width = Some(fp.len()),
            Some(w) if w != fp.len() => {
                return Err(GenboError::InconsistentFingerprint(id.clone()));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Reads a surface file; rows may come in any order but the grid must be complete.
pub fn load_surface(path: impl AsRef<Path>) -> Result<LookupSurface> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| GenboError::io(path, e))?;
    read_surface(file).map_err(|e| match e {
        GenboError::Csv(c) => GenboError::Parse { path: path.to_path_buf(), message: c.to_string() },
        other => other,
    })
}

pub fn read_surface<R: Read>(reader: R) -> Result<LookupSurface> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GenboError::invalid(format!("surface file lacks column {name:?}")))
    };
    let (cx, cw, cy, cxb, cwb) = (col("x_id")?, col("w_id")?, col("y")?, col("x_bits")?, col("w_bits")?);

    let mut parameters: Vec<ParameterPoint> = Vec::new();
    let mut tasks: Vec<TaskPoint> = Vec::new();
    let mut x_index: HashMap<String, usize> = HashMap::new();
    let mut w_index: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let x_id = &record[cx];
        let w_id = &record[cw];
        let y: f64 = record[cy]
            .parse()
            .map_err(|_| GenboError::invalid(format!("line {line}: bad outcome {:?}", &record[cy])))?;
        if !y.is_finite() {
            return Err(GenboError::NonFinite { x_id: x_id.into(), w_id: w_id.into(), value: y });
        }
        let x_fp = Fingerprint::from_hex(&record[cxb])?;
        let w_fp = Fingerprint::from_hex(&record[cwb])?;

        let xi = match x_index.get(x_id) {
            Some(&i) => {
                if parameters[i].features != x_fp {
                    return Err(GenboError::InconsistentFingerprint(x_id.to_string()));
                }
                i
            }
            None => {
                x_index.insert(x_id.to_string(), parameters.len());
                parameters.push(ParameterPoint::new(x_id, x_fp));
                parameters.len() - 1
            }
        };
        let wi = match w_index.get(w_id) {
            Some(&i) => {
                if tasks[i].features != w_fp {
                    return Err(GenboError::InconsistentFingerprint(w_id.to_string()));
                }
                i
            }
            None => {
                w_index.insert(w_id.to_string(), tasks.len());
                tasks.push(TaskPoint::new(w_id, w_fp));
                tasks.len() - 1
            }
        };
        if cells.insert((xi, wi), y).is_some() {
            return Err(GenboError::invalid(format!("line {line}: duplicate cell ({x_id}, {w_id})")));
        }
    }

    let mut values = vec![vec![0.0; tasks.len()]; parameters.len()];
    for (xi, row) in values.iter_mut().enumerate() {
        for (wi, v) in row.iter_mut().enumerate() {
            *v = *cells.get(&(xi, wi)).ok_or_else(|| GenboError::MissingCell {
                x_id: parameters[xi].id.clone(),
                w_id: tasks[wi].id.clone(),
            })?;
        }
    }
    LookupSurface::new(parameters, tasks, values)
}

/// Parameters of the planted "needle in a haystack" generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_x: usize,
    pub n_w: usize,
    #[serde(default = "default_needle_fraction")]
    pub needle_fraction: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default = "default_bits")]
    pub x_bits: usize,
    #[serde(default = "default_bits")]
    pub w_bits: usize,
    #[serde(default = "default_density")]
    pub bit_density: f64,
}

fn default_needle_fraction() -> f64 {
    0.25
}
fn default_noise_scale() -> f64 {
    0.05
}
fn default_bits() -> usize {
    crate::fingerprint::DEFAULT_BITS
}
fn default_density() -> f64 {
    0.05
}

impl SyntheticSpec {
    pub fn new(seed: u64, n_x: usize, n_w: usize) -> Self {
        SyntheticSpec {
            seed,
            n_x,
            n_w,
            needle_fraction: default_needle_fraction(),
            noise_scale: default_noise_scale(),
            x_bits: default_bits(),
            w_bits: default_bits(),
            bit_density: default_density(),
        }
    }

    /// Index of the planted dominant condition.
    pub fn dominant(&self) -> Result<usize> {
        Ok(generate(self)?.1)
    }
}

const NEEDLE_LOW: f64 = 0.6;
const NEEDLE_HIGH: f64 = 1.0;
const MAX_ATTEMPTS: usize = 1000;

/// Generates a surface with a low non-negative baseline and a few planted
/// high-scoring conditions, exactly one of which is best on average.
/// A pure function of `spec`.
pub fn synthetic_surface(spec: &SyntheticSpec) -> Result<LookupSurface> {
    Ok(generate(spec)?.0)
}

fn generate(spec: &SyntheticSpec) -> Result<(LookupSurface, usize)> {
    if spec.n_x == 0 || spec.n_w == 0 || spec.x_bits == 0 || spec.w_bits == 0 {
        return Err(GenboError::invalid("synthetic surface needs positive sizes"));
    }
    if !(spec.needle_fraction > 0.0 && spec.needle_fraction <= 1.0) {
        return Err(GenboError::invalid("needle_fraction must lie in (0, 1]"));
    }
    if !(spec.noise_scale >= 0.0) || !(spec.bit_density > 0.0 && spec.bit_density <= 1.0) {
        return Err(GenboError::invalid("noise_scale must be >= 0 and bit_density in (0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let parameters: Vec<ParameterPoint> = (0..spec.n_x)
        .map(|i| ParameterPoint::new(format!("x{i:03}"), random_fingerprint(&mut rng, spec.x_bits, spec.bit_density)))
        .collect();
    let tasks: Vec<TaskPoint> = (0..spec.n_w)
        .map(|i| TaskPoint::new(format!("w{i:03}"), random_fingerprint(&mut rng, spec.w_bits, spec.bit_density)))
        .collect();

    let n_needles = ((spec.needle_fraction * spec.n_x as f64).ceil() as usize).clamp(1, spec.n_x);
    let dominant_cover = ((0.6 * spec.n_w as f64).ceil() as usize).clamp(1, spec.n_w);
    let other_cover = ((0.35 * spec.n_w as f64).floor() as usize).clamp(1, spec.n_w);
    let baseline = Normal::new(0.0, spec.noise_scale.max(f64::MIN_POSITIVE)).unwrap();

    for _ in 0..MAX_ATTEMPTS {
        let mut values: Vec<Vec<f64>> = (0..spec.n_x)
            .map(|_| {
                (0..spec.n_w)
                    .map(|_| if spec.noise_scale > 0.0 { baseline.sample(&mut rng).abs() } else { 0.0 })
                    .collect()
            })
            .collect();
        let mut order: Vec<usize> = (0..spec.n_x).collect();
        order.shuffle(&mut rng);
        let needles = &order[..n_needles];
        let dominant = needles[0];
        let mut task_order: Vec<usize> = (0..spec.n_w).collect();
        for (k, &x) in needles.iter().enumerate() {
            task_order.shuffle(&mut rng);
            let cover = if k == 0 { dominant_cover } else { other_cover };
            for &w in &task_order[..cover] {
                values[x][w] = rng.random_range(NEEDLE_LOW..NEEDLE_HIGH);
            }
        }
        let means: Vec<f64> = values.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
        let dominates = means.iter().enumerate().all(|(x, &m)| x == dominant || m < means[dominant]);
        if dominates {
            let surface = LookupSurface::new(parameters, tasks, values)?;
            return Ok((surface, dominant));
        }
    }
    Err(GenboError::invalid("could not plant a unique dominant condition for these sizes"))
}

fn random_fingerprint(rng: &mut ChaCha8Rng, bits: usize, density: f64) -> Fingerprint {
    let mut v: Vec<bool> = (0..bits).map(|_| rng.random_bool(density)).collect();
    if !v.iter().any(|&b| b) {
        let i = rng.random_range(0..bits);
        v[i] = true;
    }
    Fingerprint::from_bits(&v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_2x2() -> &'static str {
        "x_id, w_id, y, x_bits, w_bits\n\
         P1-B3, S07, 0.25, a0, 0f\n\
         P1-B3, S08, 0.5, a0, f0\n\
         P2-B1, S07, 0.75, 05, 0f\n\
         P2-B1, S08, 1.0, 05, f0\n"
    }

    #[test]
    fn reads_2x2_fixture() {
        let s = read_surface(fixture_2x2().as_bytes()).unwrap();
        assert_eq!(s.n_parameters(), 2);
        assert_eq!(s.n_tasks(), 2);
        assert_eq!(s.resolve("P1-B3", "S07").unwrap(), 0.25);
        assert_eq!(s.resolve("P2-B1", "S08").unwrap(), 1.0);
        assert_eq!(s.parameters()[0].features.to_hex(), "a0");
    }

    #[test]
    fn missing_cell_names_the_pair() {
        let text = "x_id,w_id,y,x_bits,w_bits\nA,S1,1,f,f\nA,S2,1,f,0\nB,S1,1,0,f\n";
        match read_surface(text.as_bytes()).unwrap_err() {
            GenboError::MissingCell { x_id, w_id } => assert_eq!((x_id.as_str(), w_id.as_str()), ("B", "S2")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn inconsistent_fingerprint_rejected() {
        let text = "x_id,w_id,y,x_bits,w_bits\nA,S1,1,f,f\nA,S2,1,e,0\n";
        assert!(matches!(read_surface(text.as_bytes()), Err(GenboError::InconsistentFingerprint(id)) if id == "A"));
    }

    #[test]
    fn malformed_hex_rejected() {
        let text = "x_id,w_id,y,x_bits,w_bits\nA,S1,1,zz,f\n";
        assert!(matches!(read_surface(text.as_bytes()), Err(GenboError::InvalidHex(_))));
    }

    #[test]
    fn unknown_pair_is_missing_cell() {
        let s = read_surface(fixture_2x2().as_bytes()).unwrap();
        assert!(matches!(s.resolve("P1-B3", "S99"), Err(GenboError::MissingCell { .. })));
    }

    #[test]
    fn csv_roundtrip() {
        let s = synthetic_surface(&SyntheticSpec::new(3, 5, 4)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = read_surface(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn synthetic_replays_with_same_seed() {
        let spec = SyntheticSpec::new(7, 6, 5);
        let a = synthetic_surface(&spec).unwrap();
        let b = synthetic_surface(&spec).unwrap();
        for x in 0..6 {
            for w in 0..5 {
                assert_eq!(a.value(x, w).to_bits(), b.value(x, w).to_bits());
            }
        }
        let c = synthetic_surface(&SyntheticSpec::new(8, 6, 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_mean_is_low() {
        for seed in 0..10 {
            let s = synthetic_surface(&SyntheticSpec::new(seed, 24, 8)).unwrap();
            let mut total = 0.0;
            for x in 0..24 {
                for w in 0..8 {
                    total += s.value(x, w);
                }
            }
            assert!(total / (24.0 * 8.0) < 0.25, "seed {seed}");
        }
    }

    #[test]
    fn degenerate_sizes_rejected() {
        assert!(synthetic_surface(&SyntheticSpec::new(0, 0, 3)).is_err());
        assert!(synthetic_surface(&SyntheticSpec::new(0, 3, 0)).is_err());
    }
}
