//! Simulated data sets and CSV input/output.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use pie_core::{DrawMatrix, Family, ObservationSet, Purpose, StreamKey};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Poisson, StandardNormal};

use crate::error::{HarnessError, Result};

/// Coefficients of the simulated linear model: the first `ceil(p / 10)`
/// entries alternate `+1, -1, ...`, the rest are zero.
pub fn true_coefficients(p: usize) -> Vec<f64> {
    let active = p.div_ceil(10);
    (0..p)
        .map(|i| match i {
            i if i >= active => 0.0,
            i if i % 2 == 0 => 1.0,
            _ => -1.0,
        })
        .collect()
}

/// `y = Xβ + ε` with independent `±1` design entries, `β` from
/// [`true_coefficients`] and standard normal noise.
pub fn simulate_linear(n: usize, p: usize, seed: u64) -> Result<ObservationSet> {
    if n == 0 || p == 0 {
        return Err(HarnessError::Config("simulate_linear needs n >= 1 and p >= 1".into()));
    }
    let mut rng = StreamKey::new(seed, Purpose::Simulate, 0).rng();
    let beta = true_coefficients(p);
    let mut design = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut mean = 0.0;
        for j in 0..p {
            let x = if rng.random::<bool>() { 1.0 } else { -1.0 };
            design[(i, j)] = x;
            mean += x * beta[j];
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        y.push(mean + noise);
    }
    Ok(ObservationSet::new(
        y,
        Some(design),
        format!("simulate_linear(n={n}, p={p}, seed={seed})"),
    )?)
}

/// `n` independent draws from a univariate family at parameter `theta0`.
pub fn simulate_univariate(family: Family, theta0: f64, n: usize, seed: u64) -> Result<ObservationSet> {
    if n == 0 {
        return Err(HarnessError::Config("simulate_univariate needs n >= 1".into()));
    }
    let out_of_support = || HarnessError::Config(format!("theta0 = {theta0} is outside the {family} support"));
    let mut rng = StreamKey::new(seed, Purpose::Simulate, 0).rng();
    let y: Vec<f64> = match family {
        Family::PoissonGamma => {
            if theta0 == 0.0 {
                vec![0.0; n]
            } else {
                let dist = Poisson::new(theta0).map_err(|_| out_of_support())?;
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            }
        }
        Family::ExponentialGamma => {
            if !(theta0 > 0.0 && theta0.is_finite()) {
                return Err(out_of_support());
            }
            let dist = Exp::new(theta0).map_err(|_| out_of_support())?;
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
        Family::BernoulliBeta => {
            let dist = Bernoulli::new(theta0).map_err(|_| out_of_support())?;
            (0..n).map(|_| if dist.sample(&mut rng) { 1.0 } else { 0.0 }).collect()
        }
        other => return Err(HarnessError::Config(format!("cannot simulate univariate data for {other}"))),
    };
    Ok(ObservationSet::new(
        y,
        None,
        format!("simulate_univariate({family}, theta0={theta0}, n={n}, seed={seed})"),
    )?)
}

/// Reads a CSV file with a `y` column and optional `x1..xp` design columns.
pub fn load_csv(path: &Path) -> Result<ObservationSet> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let data_err = |line: u64, msg: String| HarnessError::Data(format!("{}: line {line}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| data_err(1, e.to_string()))?
        .clone();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| data_err(1, "missing `y` column".into()))?;
    let p = headers.len() - 1;
    let mut x_cols = vec![usize::MAX; p];
    for (c, h) in headers.iter().enumerate() {
        if c == y_col {
            continue;
        }
        let slot = h
            .strip_prefix('x')
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|k| (1..=p).contains(k) && x_cols[k - 1] == usize::MAX)
            .ok_or_else(|| data_err(1, format!("unexpected column `{h}`; expected y and x1..x{p}")))?;
        x_cols[slot - 1] = c;
    }

    let mut y = Vec::new();
    let mut x = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line());
            data_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != headers.len() {
            return Err(data_err(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let cell = |c: usize| -> Result<f64> {
            let text = &record[c];
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(data_err(line, format!("non-finite value `{text}` in column `{}`", &headers[c]))),
                Err(_) => Err(data_err(line, format!("cannot parse `{text}` in column `{}`", &headers[c]))),
            }
        };
        y.push(cell(y_col)?);
        for &c in &x_cols {
            x.push(cell(c)?);
        }
    }
    if y.is_empty() {
        return Err(data_err(1, "no data rows".into()));
    }
    let design = (p > 0).then(|| DMatrix::from_row_slice(y.len(), p, &x));
    Ok(ObservationSet::new(y, design, path.display().to_string())?)
}

/// Writes `data` in the format read by [`load_csv`].
pub fn write_csv<W: Write>(data: &ObservationSet, mut out: W) -> std::io::Result<()> {
    let p = data.p();
    let mut header = vec!["y".to_string()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    writeln!(out, "{}", header.join(","))?;
    for (i, y) in data.responses().iter().enumerate() {
        write!(out, "{y}")?;
        if let Some(z) = data.design() {
            for j in 0..p {
                write!(out, ",{}", z[(i, j)])?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads posterior draws: a header row naming the parameters, then one
/// numeric row per draw.
pub fn read_draws(path: &Path) -> Result<DrawMatrix> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line());
            HarnessError::Data(format!("{}: line {line}: {e}", path.display()))
        })?;
        let line = record.position().map_or(0, |pos| pos.line());
        let row = record
            .iter()
            .map(|text| {
                text.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| HarnessError::Data(format!("{}: line {line}: bad value `{text}`", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HarnessError::Data(format!("{}: no draws", path.display())));
    }
    Ok(DrawMatrix::from_rows(&rows, None, 0)?)
}
