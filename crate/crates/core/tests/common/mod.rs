#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sibyl_core::dataio::{Outcome, OutcomeTable, ReferenceDataset};
use sibyl_core::model::{CaseRecord, Model};
use sibyl_core::present::{build_schema, FactorMeta, PresentationSchema};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reference of independent Gaussian columns with labels drawn from the
/// model itself: `y ~ Bernoulli(clamp(raw, 0, 1))`.
pub fn gaussian_corpus(
    n: usize,
    intercept: f64,
    factors: &[(&str, f64, f64)],
    seed: u64,
) -> (Model, ReferenceDataset, OutcomeTable) {
    let model = Model::new(intercept, factors.iter().map(|(n, b, _)| (*n, *b)), "y").unwrap();
    let mut r = rng(seed);
    let normals: Vec<_> = factors.iter().map(|(_, _, s)| Normal::new(0.0, *s).unwrap()).collect();
    let cases: Vec<CaseRecord> = (0..n)
        .map(|i| {
            let values: Vec<_> = factors
                .iter()
                .zip(&normals)
                .map(|((name, _, _), d)| (*name, d.sample(&mut r)))
                .collect();
            CaseRecord::new(format!("g{i:04}"), values)
        })
        .collect();
    let outcomes = OutcomeTable::new(cases.iter().map(|c| {
        let p = model.predict_raw(c).unwrap().clamp(0.0, 1.0);
        (c.id.clone(), Outcome { removed: r.random_bool(p), removal_date: None })
    }))
    .unwrap();
    let reference = ReferenceDataset::new(&model, cases).unwrap();
    (model, reference, outcomes)
}

/// Random model and metadata with `groups` one-hot groups of 2 to 5
/// members, plus standalone Booleans and numerics.
pub struct GroupedModel {
    pub model: Model,
    pub metas: Vec<FactorMeta>,
    pub schema: PresentationSchema,
    pub groups: Vec<Vec<String>>,
}

pub fn grouped_model(r: &mut ChaCha8Rng, groups: usize) -> GroupedModel {
    let mut metas = Vec::new();
    let mut weights = Vec::new();
    let mut member_lists = Vec::new();
    for g in 0..groups {
        let size = r.random_range(2..=5);
        let mut members = Vec::new();
        for m in 0..size {
            let name = format!("G{g} MEMBER {m}");
            metas.push(FactorMeta::member(&name, &format!("GROUP {g}"), &format!("level {m}"), "DG", "Demographics"));
            weights.push((name.clone(), r.random_range(-1.0..1.0)));
            members.push(name);
        }
        member_lists.push(members);
    }
    for b in 0..r.random_range(1..=4) {
        let name = format!("FLAG {b}");
        metas.push(FactorMeta::binary(&name, "HH", "Household"));
        weights.push((name, r.random_range(-1.0..1.0)));
    }
    for k in 0..r.random_range(1..=3) {
        let name = format!("COUNT {k}");
        metas.push(FactorMeta::numeric(&name, "RH", "Referral history"));
        weights.push((name, r.random_range(-0.3..0.3)));
    }
    let model = Model::new(r.random_range(-1.0..1.0), weights, "y").unwrap();
    let schema = build_schema(&metas).unwrap();
    GroupedModel {
        model,
        metas,
        schema,
        groups: member_lists,
    }
}

pub fn grouped_case(r: &mut ChaCha8Rng, g: &GroupedModel, id: &str) -> CaseRecord {
    let mut values: Vec<(String, f64)> = Vec::new();
    for members in &g.groups {
        let active = r.random_range(0..members.len());
        for (i, m) in members.iter().enumerate() {
            values.push((m.clone(), if i == active { 1.0 } else { 0.0 }));
        }
    }
    for name in g.model.factor_names() {
        if name.starts_with("FLAG") {
            values.push((name.to_string(), f64::from(r.random_bool(0.5))));
        } else if name.starts_with("COUNT") {
            values.push((name.to_string(), f64::from(r.random_range(0..12u8))));
        }
    }
    CaseRecord::new(id, values)
}

/// Quantile with linear interpolation between order statistics, written
/// out independently of the library.
pub fn oracle_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn oracle_cutpoints(raws: &[f64]) -> Vec<f64> {
    (1..20).map(|j| oracle_quantile(raws, j as f64 / 20.0)).collect()
}

/// One plus the number of cutpoints strictly below `raw`.
pub fn oracle_score(raw: f64, cutpoints: &[f64]) -> u8 {
    1 + cutpoints.iter().filter(|&&t| t < raw).count() as u8
}

pub fn oracle_mean_std(column: &[f64]) -> (f64, f64) {
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A spawned `sibyl serve`, killed on drop.
pub struct Server {
    pub child: Child,
    pub addr: SocketAddr,
}

impl Server {
    pub fn start(bin: &str, data_dir: &Path, extra: &[&str]) -> Server {
        let mut child = Command::new(bin)
            .arg("serve")
            .arg("--data-dir")
            .arg(data_dir)
            .args(["--port", "0"])
            .args(extra)
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn sibyl serve");
        let stdout = child.stdout.take().unwrap();
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on http://")
            .unwrap_or_else(|| panic!("unexpected startup line {line:?}"))
            .parse()
            .unwrap();
        Server { child, addr }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Minimal HTTP/1.1 client: one request per connection.
pub fn http(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    let body = body.unwrap_or("");
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, rest) = text.split_once("\r\n\r\n").expect("response head");
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    let chunked = head.to_ascii_lowercase().contains("transfer-encoding: chunked");
    (status, if chunked { dechunk(rest) } else { rest.to_string() })
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, rest) = s.split_once("\r\n").unwrap();
        let n = usize::from_str_radix(size.trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.push_str(&rest[..n]);
        s = &rest[n + 2..];
    }
}

/// Rendered text contains `True` or `False` as a standalone word.
pub fn has_bool_token(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric())
        .any(|w| w.eq_ignore_ascii_case("true") || w.eq_ignore_ascii_case("false"))
}
