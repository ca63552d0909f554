//! Binary model containers and CSV views of dictionaries.
//!
//! Every container starts with a 4-byte magic and a little-endian `u16`
//! version. Integers are `u64`, reals `f64`, all little-endian; matrices are
//! stored column-major.
//!
//! | magic  | content                                              |
//! |--------|------------------------------------------------------|
//! | `ENSD` | one dictionary: M, K, atom source, optional origins  |
//! | `ENSM` | ensemble: kind, betas, alphas, lambda, operator, dictionaries |
//! | `ENSL` | Ex-MLD: per-level dictionary lists                   |
//! | `ENSP` | paired SISR model: betas, low dictionaries, high matrices |

use std::io::{Read, Write};
use std::path::Path;

use ensparse_core::ensemble::ConstraintCase;
use ensparse_core::restoration::{PairedDictionary, PairedModel};
use ensparse_core::{
    AtomSource, DMatrix, DVector, Dictionary, EnsembleModel, ModelKind, MultilevelModel, OperatorDescriptor,
    OperatorKind, WeightVector,
};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u16 = 1;

const DICT_MAGIC: &[u8; 4] = b"ENSD";
const ENSEMBLE_MAGIC: &[u8; 4] = b"ENSM";
const MULTILEVEL_MAGIC: &[u8; 4] = b"ENSL";
const PAIRED_MAGIC: &[u8; 4] = b"ENSP";

// Caps on header counts so a corrupt file fails cleanly instead of allocating.
const MAX_DIM: u64 = 1 << 24;
const MAX_COUNT: u64 = 1 << 20;

/// Any model the commands can load.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Dictionary(Dictionary),
    Ensemble(EnsembleModel),
    Multilevel(MultilevelModel),
    Paired(PairedModel),
}

impl ModelFile {
    pub fn method_name(&self) -> &'static str {
        match self {
            ModelFile::Dictionary(_) => "altopt",
            ModelFile::Ensemble(m) => m.kind().name(),
            ModelFile::Multilevel(_) => "exmld",
            ModelFile::Paired(m) => m.kind().name(),
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn header(magic: &[u8; 4]) -> Self {
        let mut v = magic.to_vec();
        v.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Writer(v)
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn raw_u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.u64(m.nrows());
        self.u64(m.ncols());
        for v in m.iter() {
            self.f64(*v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::data("model file is truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::data(format!("expected a {} container", String::from_utf8_lossy(magic))));
        }
        let v = u16::from_le_bytes(self.take(2)?.try_into().unwrap());
        if v != FORMAT_VERSION {
            return Err(Error::data(format!("unsupported format version {v}")));
        }
        Ok(())
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn raw_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn count(&mut self, cap: u64, what: &str) -> Result<usize> {
        let v = self.raw_u64()?;
        if v > cap {
            return Err(Error::data(format!("{what} {v} is out of range")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::data("size overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let r = self.count(MAX_DIM, "matrix rows")?;
        let c = self.count(MAX_DIM, "matrix columns")?;
        Ok(DMatrix::from_vec(r, c, self.f64s(r * c)?))
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::data("trailing bytes after model"));
        }
        Ok(())
    }
}

fn source_code(s: AtomSource) -> u8 {
    match s {
        AtomSource::Learned => 0,
        AtomSource::ExampleSubset => 1,
        AtomSource::KmeansCenters => 2,
    }
}

fn source_from(c: u8) -> Result<AtomSource> {
    Ok(match c {
        0 => AtomSource::Learned,
        1 => AtomSource::ExampleSubset,
        2 => AtomSource::KmeansCenters,
        _ => return Err(Error::data(format!("unknown atom source {c}"))),
    })
}

fn kind_code(k: ModelKind) -> u8 {
    match k {
        ModelKind::AltOpt => 0,
        ModelKind::RandExAv => 1,
        ModelKind::BoostEx => 2,
        ModelKind::BoostKm => 3,
    }
}

fn kind_from(c: u8) -> Result<ModelKind> {
    Ok(match c {
        0 => ModelKind::AltOpt,
        1 => ModelKind::RandExAv,
        2 => ModelKind::BoostEx,
        3 => ModelKind::BoostKm,
        _ => return Err(Error::data(format!("unknown model kind {c}"))),
    })
}

fn case_code(c: ConstraintCase) -> u8 {
    ConstraintCase::ALL.iter().position(|x| *x == c).unwrap() as u8
}

fn case_from(c: u8) -> Result<ConstraintCase> {
    ConstraintCase::ALL
        .get(c as usize)
        .copied()
        .ok_or_else(|| Error::data(format!("unknown constraint case {c}")))
}

fn op_kind_code(k: OperatorKind) -> u8 {
    match k {
        OperatorKind::Identity => 0,
        OperatorKind::RandomProjection => 1,
        OperatorKind::BlurDownsample => 2,
    }
}

fn op_kind_from(c: u8) -> Result<OperatorKind> {
    Ok(match c {
        0 => OperatorKind::Identity,
        1 => OperatorKind::RandomProjection,
        2 => OperatorKind::BlurDownsample,
        _ => return Err(Error::data(format!("unknown operator kind {c}"))),
    })
}

fn put_dictionary(w: &mut Writer, d: &Dictionary) {
    w.0.extend_from_slice(DICT_MAGIC);
    w.u64(d.dim());
    w.u64(d.len());
    w.u8(source_code(d.source()));
    match d.origin() {
        Some(o) => {
            w.u8(1);
            for &i in o {
                w.u64(i);
            }
        }
        None => w.u8(0),
    }
    for v in d.atoms().iter() {
        w.f64(*v);
    }
}

fn get_dictionary(r: &mut Reader<'_>) -> Result<Dictionary> {
    if r.take(4)? != DICT_MAGIC {
        return Err(Error::data("expected a dictionary block"));
    }
    let m = r.count(MAX_DIM, "dictionary dimension")?;
    let k = r.count(MAX_DIM, "atom count")?;
    let source = source_from(r.u8()?)?;
    let origin = match r.u8()? {
        0 => None,
        1 => Some((0..k).map(|_| r.count(u64::MAX, "origin")).collect::<Result<Vec<_>>>()?),
        c => return Err(Error::data(format!("bad origin flag {c}"))),
    };
    let atoms = DMatrix::from_vec(m, k, r.f64s(m * k)?);
    let d = Dictionary::from_unit_atoms(atoms, source)?;
    Ok(match origin {
        Some(o) => d.with_origin(o)?,
        None => d,
    })
}

pub fn encode_dictionary(d: &Dictionary) -> Vec<u8> {
    let mut w = Writer::header(DICT_MAGIC);
    put_dictionary(&mut w, d);
    w.0
}

pub fn decode_dictionary(bytes: &[u8]) -> Result<Dictionary> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(DICT_MAGIC)?;
    let d = get_dictionary(&mut r)?;
    r.finish()?;
    Ok(d)
}

pub fn encode_ensemble(m: &EnsembleModel) -> Vec<u8> {
    let mut w = Writer::header(ENSEMBLE_MAGIC);
    w.u8(kind_code(m.kind()));
    w.u8(case_code(m.weights().case()));
    w.u64(m.len());
    w.f64(m.lambda_train());
    for b in m.betas().iter() {
        w.f64(*b);
    }
    match m.alphas() {
        Some(a) => {
            w.u8(1);
            for v in a.iter() {
                w.f64(*v);
            }
        }
        None => w.u8(0),
    }
    match m.trained_operator() {
        Some(op) => {
            w.u8(1);
            w.u8(op_kind_code(op.kind));
            w.u64(op.in_dim);
            w.u64(op.out_dim);
            w.raw_u64(op.seed);
            w.u64(op.width);
            w.u64(op.height);
            w.u64(op.scale);
        }
        None => w.u8(0),
    }
    for d in m.dictionaries() {
        put_dictionary(&mut w, d);
    }
    w.0
}

pub fn decode_ensemble(bytes: &[u8]) -> Result<EnsembleModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(ENSEMBLE_MAGIC)?;
    let m = get_ensemble_body(&mut r)?;
    r.finish()?;
    Ok(m)
}

fn get_ensemble_body(r: &mut Reader<'_>) -> Result<EnsembleModel> {
    let kind = kind_from(r.u8()?)?;
    let case = case_from(r.u8()?)?;
    let l = r.count(MAX_COUNT, "model count")?;
    let lambda = r.f64()?;
    let betas = DVector::from_vec(r.f64s(l)?);
    let alphas = match r.u8()? {
        0 => None,
        1 => Some(DVector::from_vec(r.f64s(l)?)),
        c => return Err(Error::data(format!("bad alpha flag {c}"))),
    };
    let operator = match r.u8()? {
        0 => None,
        1 => Some(OperatorDescriptor {
            kind: op_kind_from(r.u8()?)?,
            in_dim: r.count(MAX_DIM, "operator in_dim")?,
            out_dim: r.count(MAX_DIM, "operator out_dim")?,
            seed: r.raw_u64()?,
            width: r.count(MAX_DIM, "operator width")?,
            height: r.count(MAX_DIM, "operator height")?,
            scale: r.count(MAX_DIM, "operator scale")?,
        }),
        c => return Err(Error::data(format!("bad operator flag {c}"))),
    };
    let dicts = (0..l).map(|_| get_dictionary(r)).collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel::new(kind, dicts, WeightVector::new(betas, case)?, alphas, lambda, operator)?)
}

pub fn encode_multilevel(m: &MultilevelModel) -> Vec<u8> {
    let mut w = Writer::header(MULTILEVEL_MAGIC);
    w.u64(m.levels().len());
    for level in m.levels() {
        w.u64(level.len());
        for d in level {
            put_dictionary(&mut w, d);
        }
    }
    w.0
}

pub fn decode_multilevel(bytes: &[u8]) -> Result<MultilevelModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(MULTILEVEL_MAGIC)?;
    let n = r.count(MAX_COUNT, "level count")?;
    let mut levels = Vec::with_capacity(n);
    for _ in 0..n {
        let l = r.count(MAX_COUNT, "dictionaries per level")?;
        levels.push((0..l).map(|_| get_dictionary(&mut r)).collect::<Result<Vec<_>>>()?);
    }
    r.finish()?;
    Ok(MultilevelModel::new(levels)?)
}

pub fn encode_paired(m: &PairedModel) -> Vec<u8> {
    let mut w = Writer::header(PAIRED_MAGIC);
    w.u8(kind_code(m.kind()));
    w.u64(m.dictionaries().len());
    w.u64(m.patch_size());
    w.u64(m.scale());
    for b in m.betas().iter() {
        w.f64(*b);
    }
    for pd in m.dictionaries() {
        put_dictionary(&mut w, &pd.low);
        w.matrix(&pd.high);
    }
    w.0
}

pub fn decode_paired(bytes: &[u8]) -> Result<PairedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(PAIRED_MAGIC)?;
    let kind = kind_from(r.u8()?)?;
    let l = r.count(MAX_COUNT, "model count")?;
    let patch = r.count(MAX_DIM, "patch size")?;
    let scale = r.count(MAX_DIM, "scale")?;
    let betas = DVector::from_vec(r.f64s(l)?);
    let mut dicts = Vec::with_capacity(l);
    for _ in 0..l {
        let low = get_dictionary(&mut r)?;
        let high = r.matrix()?;
        dicts.push(PairedDictionary::new(low, high)?);
    }
    r.finish()?;
    Ok(PairedModel::new(kind, dicts, betas, patch, scale)?)
}

pub fn encode_model(m: &ModelFile) -> Vec<u8> {
    match m {
        ModelFile::Dictionary(d) => encode_dictionary(d),
        ModelFile::Ensemble(e) => encode_ensemble(e),
        ModelFile::Multilevel(l) => encode_multilevel(l),
        ModelFile::Paired(p) => encode_paired(p),
    }
}

/// Decodes whichever container `bytes` holds.
pub fn decode_model(bytes: &[u8]) -> Result<ModelFile> {
    match bytes.get(..4) {
        Some(m) if m == DICT_MAGIC => decode_dictionary(bytes).map(ModelFile::Dictionary),
        Some(m) if m == ENSEMBLE_MAGIC => decode_ensemble(bytes).map(ModelFile::Ensemble),
        Some(m) if m == MULTILEVEL_MAGIC => decode_multilevel(bytes).map(ModelFile::Multilevel),
        Some(m) if m == PAIRED_MAGIC => decode_paired(bytes).map(ModelFile::Paired),
        _ => Err(Error::data("not an ensparse model file")),
    }
}

pub fn write_model(path: &Path, m: &ModelFile) -> Result<()> {
    std::fs::write(path, encode_model(m)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

pub const DICTIONARY_CSV_SCHEMA: &str = "ensparse.dictionary/v1";

/// One atom per row: `origin` (empty when unknown), then the M entries.
pub fn write_dictionary_csv(out: impl Write, d: &Dictionary) -> Result<()> {
    let mut out = out;
    let src = match d.source() {
        AtomSource::Learned => "learned",
        AtomSource::ExampleSubset => "example_subset",
        AtomSource::KmeansCenters => "kmeans_centers",
    };
    writeln!(out, "#schema={DICTIONARY_CSV_SCHEMA}").and_then(|_| writeln!(out, "#atom_source={src}"))
        .map_err(|e| Error::io(Path::new("<dictionary csv>"), e))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["origin".to_string()];
    header.extend((0..d.dim()).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (j, atom) in d.atoms().column_iter().enumerate() {
        let mut rec = vec![d.origin().map(|o| o[j].to_string()).unwrap_or_default()];
        rec.extend(atom.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<dictionary csv>"), e))
}

pub fn read_dictionary_csv(input: impl Read) -> Result<Dictionary> {
    let text = std::io::read_to_string(input).map_err(|e| Error::io(Path::new("<dictionary csv>"), e))?;
    let mut lines = text.lines();
    if lines.next() != Some(&format!("#schema={DICTIONARY_CSV_SCHEMA}")) {
        return Err(Error::data("dictionary CSV lacks its schema line"));
    }
    let source = match lines.next().and_then(|l| l.strip_prefix("#atom_source=")) {
        Some("learned") => AtomSource::Learned,
        Some("example_subset") => AtomSource::ExampleSubset,
        Some("kmeans_centers") => AtomSource::KmeansCenters,
        _ => return Err(Error::data("dictionary CSV lacks a valid atom_source line")),
    };
    let body: String = lines.map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let mut cols: Vec<f64> = Vec::new();
    let mut origin: Vec<Option<usize>> = Vec::new();
    let mut m = None;
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let o = rec.get(0).unwrap_or("");
        origin.push(if o.is_empty() { None } else { Some(o.parse().map_err(|_| Error::data("bad origin"))?) });
        let vals = rec.iter().skip(1).map(|v| v.parse::<f64>().map_err(|_| Error::data(format!("bad number {v}"))));
        let vals = vals.collect::<Result<Vec<_>>>()?;
        if *m.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::data("ragged dictionary CSV"));
        }
        cols.extend(vals);
    }
    let m = m.ok_or_else(|| Error::data("dictionary CSV has no atoms"))?;
    let d = Dictionary::new(DMatrix::from_vec(m, origin.len(), cols), source)?;
    if origin.iter().all(Option::is_some) {
        Ok(d.with_origin(origin.into_iter().flatten().collect())?)
    } else {
        Ok(d)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::data(format!("CSV: {e}"))
}
