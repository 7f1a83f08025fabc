//! Plain-text artifacts for trained maps and linear models.
//!
//! ```text
//! dikernel-artifact 1
//! kind nystrom
//! kernel gaussian
//! gamma 0.5
//! rank_tol 3e-12
//! d 2
//! n 3
//! matrix reps 2 3
//! 0.1 0.2 0.3
//! 0.4 0.5 0.6
//! ```
//!
//! After the header come `key value` lines, then `matrix <name> <rows> <cols>`
//! blocks stored row-major, one row per line. Floats are written in shortest
//! round-trip form, so save/load is exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::baselines::LinearHead;
use crate::error::{Error, Result};
use crate::feature_maps::{FeatureMap, FourierMap, NystromMap};
use crate::kernels::{KernelConfig, KernelFamily};
use crate::numerics::{Matrix, Vector};
use crate::predictors::KrrModel;

const MAGIC: &str = "dikernel-artifact 1";

struct Doc {
    fields: Vec<(String, String)>,
    matrices: Vec<(String, Matrix)>,
}

impl Doc {
    fn new(kind: &str) -> Self {
        Doc {
            fields: vec![("kind".into(), kind.into())],
            matrices: Vec::new(),
        }
    }

    fn field(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.push((key.into(), value.to_string()));
        self
    }

    fn matrix(mut self, name: &str, m: &Matrix) -> Self {
        self.matrices.push((name.into(), m.clone()));
        self
    }

    fn vector(self, name: &str, v: &Vector) -> Self {
        let row = Matrix::from_row_slice(1, v.len(), v.as_slice());
        self.matrix(name, &row)
    }

    fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.fields {
            let _ = writeln!(out, "{k} {v}");
        }
        for (name, m) in &self.matrices {
            let _ = writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols());
            for row in m.row_iter() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

struct Parsed<'a> {
    path: &'a Path,
    fields: HashMap<String, (usize, String)>,
    matrices: HashMap<String, Matrix>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse<'a>(path: &'a Path, text: &str) -> Result<Parsed<'a>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(parse_err(path, 1, format!("expected header `{MAGIC}`"))),
    }
    let mut fields = HashMap::new();
    let mut matrices = HashMap::new();
    while let Some((no, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        if key != "matrix" {
            fields.insert(key.to_string(), (no, rest.trim().to_string()));
            continue;
        }
        let parts: Vec<&str> = rest.split_whitespace().collect();
        let [name, rows, cols] = parts[..] else {
            return Err(parse_err(
                path,
                no,
                "expected `matrix <name> <rows> <cols>`",
            ));
        };
        let rows: usize = rows
            .parse()
            .map_err(|_| parse_err(path, no, "bad row count"))?;
        let cols: usize = cols
            .parse()
            .map_err(|_| parse_err(path, no, "bad column count"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rno, row) = lines
                .next()
                .ok_or_else(|| parse_err(path, no, format!("matrix {name} is truncated")))?;
            let before = data.len();
            for tok in row.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(path, rno, format!("bad number `{tok}`")))?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(parse_err(
                    path,
                    rno,
                    format!("expected {cols} values, found {}", data.len() - before),
                ));
            }
        }
        matrices.insert(name.to_string(), Matrix::from_row_slice(rows, cols, &data));
    }
    Ok(Parsed {
        path,
        fields,
        matrices,
    })
}

impl Parsed<'_> {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (line, raw) = self
            .fields
            .get(key)
            .ok_or_else(|| parse_err(self.path, 0, format!("missing field `{key}`")))?;
        raw.parse()
            .map_err(|_| parse_err(self.path, *line, format!("bad value for `{key}`: `{raw}`")))
    }

    fn kind(&self) -> Result<String> {
        self.get("kind")
    }

    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let m = self
            .matrices
            .get(name)
            .ok_or_else(|| parse_err(self.path, 0, format!("missing matrix `{name}`")))?;
        if m.shape() != (rows, cols) {
            return Err(Error::dims(
                "artifact matrix shape",
                format!("{name} {rows}x{cols}"),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        Ok(m.clone())
    }

    fn vector(&self, name: &str, len: usize) -> Result<Vector> {
        let m = self.matrix(name, 1, len)?;
        Ok(Vector::from_column_slice(m.as_slice()))
    }

    fn kernel(&self) -> Result<KernelConfig> {
        let family: KernelFamily = self.get("kernel")?;
        match family {
            KernelFamily::Gaussian => KernelConfig::gaussian(self.get("gamma")?),
            KernelFamily::Linear => Ok(KernelConfig::linear()),
        }
    }
}

fn write_doc(path: &Path, doc: Doc) -> Result<()> {
    fs::write(path, doc.render()).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn map_doc(map: &FeatureMap) -> Doc {
    match map {
        FeatureMap::Nystrom(m) => Doc::new("nystrom")
            .field("kernel", m.kernel().family)
            .field("gamma", format!("{:e}", m.kernel().gamma))
            .field("rank_tol", format!("{:e}", m.rank_tol()))
            .field("d", m.input_dim())
            .field("n", m.n_reps())
            .matrix("reps", m.reps()),
        FeatureMap::Fourier(m) => Doc::new("fourier")
            .field("d", m.input_dim())
            .field("J", m.feature_dim())
            .matrix("w", m.projection())
            .vector("b", m.phases()),
    }
}

pub fn map_to_string(map: &FeatureMap) -> String {
    map_doc(map).render()
}

pub fn save_map(path: &Path, map: &FeatureMap) -> Result<()> {
    write_doc(path, map_doc(map))
}

fn map_from(p: &Parsed) -> Result<FeatureMap> {
    let d: usize = p.get("d")?;
    match p.kind()?.as_str() {
        "nystrom" => {
            let n: usize = p.get("n")?;
            let reps = p.matrix("reps", d, n)?;
            Ok(FeatureMap::Nystrom(NystromMap::with_rank_tol(
                reps,
                p.kernel()?,
                p.get("rank_tol")?,
            )?))
        }
        "fourier" => {
            let j: usize = p.get("J")?;
            let w = p.matrix("w", d, j)?;
            let b = p.vector("b", j)?;
            Ok(FeatureMap::Fourier(FourierMap::new(w, b)?))
        }
        other => Err(parse_err(
            p.path,
            0,
            format!("`{other}` is not a feature map"),
        )),
    }
}

pub fn load_map(path: &Path) -> Result<FeatureMap> {
    map_from(&parse(path, &read_text(path)?)?)
}

pub fn save_krr(path: &Path, model: &KrrModel) -> Result<()> {
    let doc = Doc::new("krr")
        .field("J", model.feature_dim())
        .field("L", model.n_outputs())
        .field("rho", format!("{:e}", model.rho))
        .matrix("w", &model.w)
        .vector("b", &model.b);
    write_doc(path, doc)
}

pub fn load_krr(path: &Path) -> Result<KrrModel> {
    let p = parse(path, &read_text(path)?)?;
    expect_kind(&p, "krr")?;
    let (j, l): (usize, usize) = (p.get("J")?, p.get("L")?);
    Ok(KrrModel {
        w: p.matrix("w", j, l)?,
        b: p.vector("b", l)?,
        rho: p.get("rho")?,
    })
}

pub fn save_head(path: &Path, head: &LinearHead) -> Result<()> {
    let doc = Doc::new("linear_head")
        .field("J", head.w.nrows())
        .field("L", head.w.ncols())
        .matrix("w", &head.w)
        .vector("b", &head.b);
    write_doc(path, doc)
}

pub fn load_head(path: &Path) -> Result<LinearHead> {
    let p = parse(path, &read_text(path)?)?;
    expect_kind(&p, "linear_head")?;
    let (j, l): (usize, usize) = (p.get("J")?, p.get("L")?);
    Ok(LinearHead {
        w: p.matrix("w", j, l)?,
        b: p.vector("b", l)?,
    })
}

fn expect_kind(p: &Parsed, kind: &str) -> Result<()> {
    let found = p.kind()?;
    if found != kind {
        return Err(parse_err(
            p.path,
            0,
            format!("expected a {kind} artifact, found {found}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_maps::{init_fourier, init_nystrom};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0) / 3.0)
    }

    #[test]
    fn nystrom_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.txt");
        let x = random(3, 40, 1);
        let map = init_nystrom(&x, 7, KernelConfig::gaussian(0.37).unwrap(), 2).unwrap();
        save_map(&path, &FeatureMap::Nystrom(map.clone())).unwrap();
        let FeatureMap::Nystrom(back) = load_map(&path).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(back.reps(), map.reps());
        assert_eq!(back.kernel(), map.kernel());
        assert_eq!(back.rank_tol(), map.rank_tol());
    }

    #[test]
    fn fourier_round_trip_is_exact() {
        let map = init_fourier(&KernelConfig::gaussian(2.0).unwrap(), 4, 9, 3).unwrap();
        let text = map_to_string(&FeatureMap::Fourier(map.clone()));
        let back = map_from(&parse(Path::new("mem"), &text).unwrap()).unwrap();
        let FeatureMap::Fourier(back) = back else {
            panic!("wrong kind");
        };
        assert_eq!(back.projection(), map.projection());
        assert_eq!(back.phases(), map.phases());
    }

    #[test]
    fn linear_models_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let krr = KrrModel {
            w: random(5, 3, 4),
            b: Vector::from_vec(vec![0.1, f64::MIN_POSITIVE, -1e300]),
            rho: 1e-4,
        };
        save_krr(&dir.path().join("krr"), &krr).unwrap();
        assert_eq!(load_krr(&dir.path().join("krr")).unwrap(), krr);
        let head = LinearHead {
            w: krr.w.clone(),
            b: krr.b.clone(),
        };
        save_head(&dir.path().join("head"), &head).unwrap();
        assert_eq!(load_head(&dir.path().join("head")).unwrap(), head);
        assert!(load_head(&dir.path().join("krr")).is_err());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let path = Path::new("bad");
        assert!(parse(path, "nonsense\n").is_err());
        let truncated = format!("{MAGIC}\nkind fourier\nd 1\nJ 2\nmatrix w 1 2\n0.5\n");
        assert!(matches!(
            parse(path, &truncated),
            Err(Error::Parse { line: 6, .. })
        ));
        let shape =
            format!("{MAGIC}\nkind fourier\nd 2\nJ 1\nmatrix w 1 1\n0.5\nmatrix b 1 1\n0\n");
        let p = parse(path, &shape).unwrap();
        assert!(matches!(map_from(&p), Err(Error::DimensionMismatch { .. })));
    }
}
