//! Grid files.
//!
//! A grid lives in two files: `<path>` holds the raw little-endian 64-bit
//! cell values (floats, or integer numerators in fixed mode) and
//! `<path>.json` the header
//! `{"version": 1, "n", "L", "mode": "f64" | "fixed", "denom", "order": "time-fastest"}`.
//! A self-contained JSON document with a `values` field is also accepted:
//! a flat array, or for `n = 1` three arrays holding the root and its two
//! forward translates.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::grid::{cell_count, AnyGrid, GridFunction};

pub const FORMAT_VERSION: u64 = 1;
pub const ORDER: &str = "time-fastest";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridHeader {
    pub version: u64,
    pub n: usize,
    #[serde(rename = "L")]
    pub level: u32,
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub denom: Option<i64>,
    pub order: String,
}

impl GridHeader {
    pub fn for_grid(g: &AnyGrid) -> Result<GridHeader> {
        let denom = match g {
            AnyGrid::Float(_) => None,
            AnyGrid::Fixed(f) => Some(
                i64::try_from(f.denom())
                    .map_err(|_| Error::format("denom", "does not fit in 64 bits"))?,
            ),
        };
        Ok(GridHeader {
            version: FORMAT_VERSION,
            n: g.dim(),
            level: g.level(),
            mode: if denom.is_some() { "fixed" } else { "f64" }.into(),
            denom,
            order: ORDER.into(),
        })
    }

    fn cells(&self) -> usize {
        cell_count(self.n, self.level)
    }
}

/// Path of the sidecar header for a payload path.
pub fn header_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| Error::format(name, "missing"))
}

fn uint_field(obj: &Map<String, Value>, name: &str) -> Result<u64> {
    field(obj, name)?
        .as_u64()
        .ok_or_else(|| Error::format(name, "expected a nonnegative integer"))
}

fn parse_header(obj: &Map<String, Value>, need_order: bool) -> Result<GridHeader> {
    if let Some(v) = obj.get("version") {
        if v.as_u64() != Some(FORMAT_VERSION) {
            return Err(Error::format("version", format!("unsupported version {v}")));
        }
    } else if need_order {
        return Err(Error::format("version", "missing"));
    }
    let n = uint_field(obj, "n")?;
    if n == 0 || n as usize > crate::cube::MAX_DIM {
        return Err(Error::format("n", format!("dimension {n} outside 1..={}", crate::cube::MAX_DIM)));
    }
    let level = uint_field(obj, "L")?;
    if level * n > 40 {
        return Err(Error::format("L", format!("level {level} too fine for n = {n}")));
    }
    let mode = field(obj, "mode")?
        .as_str()
        .ok_or_else(|| Error::format("mode", "expected a string"))?
        .to_string();
    let denom = match mode.as_str() {
        "f64" => None,
        "fixed" => {
            let d = field(obj, "denom")?
                .as_i64()
                .filter(|d| *d > 0)
                .ok_or_else(|| Error::format("denom", "expected a positive integer"))?;
            Some(d)
        }
        other => return Err(Error::format("mode", format!("unknown mode `{other}`"))),
    };
    match obj.get("order") {
        Some(v) if v.as_str() == Some(ORDER) => {}
        Some(v) => return Err(Error::format("order", format!("unsupported order {v}"))),
        None if need_order => return Err(Error::format("order", "missing")),
        None => {}
    }
    Ok(GridHeader {
        version: FORMAT_VERSION,
        n: n as usize,
        level: level as u32,
        mode,
        denom,
        order: ORDER.into(),
    })
}

fn build(header: &GridHeader, raw: Vec<[u8; 8]>) -> Result<AnyGrid> {
    if raw.len() != header.cells() {
        return Err(Error::format(
            "values",
            format!("expected {} cells, found {}", header.cells(), raw.len()),
        ));
    }
    Ok(match header.denom {
        None => AnyGrid::Float(GridFunction::from_f64(
            header.n,
            header.level,
            raw.into_iter().map(f64::from_le_bytes).collect(),
        )?),
        Some(d) => AnyGrid::Fixed(GridFunction::from_fixed(
            header.n,
            header.level,
            d as i128,
            raw.into_iter().map(|b| i64::from_le_bytes(b) as i128).collect(),
        )?),
    })
}

fn read_payload(path: &Path) -> Result<Vec<[u8; 8]>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::format(
            "payload",
            format!("{} bytes is not a whole number of 64-bit values", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| c.try_into().expect("chunk of 8"))
        .collect())
}

/// Load a grid from a payload path (with sidecar), a header path, or a
/// self-contained JSON document.
pub fn load(path: &Path) -> Result<AnyGrid> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        let text = fs::read_to_string(path)?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| Error::format("json", e.to_string()))?;
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::format("json", "expected an object"))?;
        if obj.contains_key("values") {
            return from_json_object(obj);
        }
        let header = parse_header(obj, true)?;
        let payload = path.with_extension("");
        return build(&header, read_payload(&payload)?);
    }
    let hp = header_path(path);
    let text = fs::read_to_string(&hp)
        .map_err(|e| Error::format("header", format!("{}: {e}", hp.display())))?;
    let doc: Value =
        serde_json::from_str(&text).map_err(|e| Error::format("header", e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::format("header", "expected an object"))?;
    let header = parse_header(obj, true)?;
    build(&header, read_payload(path)?)
}

/// Parse a self-contained JSON grid.
pub fn from_json_str(text: &str) -> Result<AnyGrid> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| Error::format("json", e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::format("json", "expected an object"))?;
    from_json_object(obj)
}

fn from_json_object(obj: &Map<String, Value>) -> Result<AnyGrid> {
    let header = parse_header(obj, false)?;
    let values = field(obj, "values")?
        .as_array()
        .ok_or_else(|| Error::format("values", "expected an array"))?;
    let flat: Vec<&Value> = if values.first().is_some_and(Value::is_array) {
        if header.n != 1 || values.len() != 3 {
            return Err(Error::format(
                "values",
                "nested blocks are only accepted for n = 1, as three arrays",
            ));
        }
        let mut out = Vec::new();
        for (i, block) in values.iter().enumerate() {
            let b = block
                .as_array()
                .ok_or_else(|| Error::format("values", format!("block {i} is not an array")))?;
            if b.len() != 1 << header.level {
                return Err(Error::format(
                    "values",
                    format!("block {i} has {} cells, expected {}", b.len(), 1u64 << header.level),
                ));
            }
            out.extend(b);
        }
        out
    } else {
        values.iter().collect()
    };
    let bad = |i: usize| Error::format("values", format!("cell {i} has the wrong type"));
    let raw = match header.denom {
        None => flat
            .iter()
            .enumerate()
            .map(|(i, v)| v.as_f64().map(f64::to_le_bytes).ok_or_else(|| bad(i)))
            .collect::<Result<Vec<_>>>()?,
        Some(_) => flat
            .iter()
            .enumerate()
            .map(|(i, v)| v.as_i64().map(i64::to_le_bytes).ok_or_else(|| bad(i)))
            .collect::<Result<Vec<_>>>()?,
    };
    build(&header, raw)
}

fn raw_values(g: &AnyGrid) -> Result<Vec<[u8; 8]>> {
    match g {
        AnyGrid::Float(f) => Ok(f.cells().iter().map(|v| v.to_le_bytes()).collect()),
        AnyGrid::Fixed(f) => f
            .cells()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                i64::try_from(v)
                    .map(i64::to_le_bytes)
                    .map_err(|_| Error::format("values", format!("cell {i} exceeds 64 bits")))
            })
            .collect(),
    }
}

/// Write the payload to `path` and the header to `<path>.json`.
pub fn save(g: &AnyGrid, path: &Path) -> Result<()> {
    let header = GridHeader::for_grid(g)?;
    let raw = raw_values(g)?;
    let mut header_text = serde_json::to_string_pretty(&header).expect("header serializes");
    header_text.push('\n');
    fs::write(path, raw.concat())?;
    fs::write(header_path(path), header_text)?;
    Ok(())
}

/// A self-contained JSON document with a flat `values` array.
pub fn to_json_string(g: &AnyGrid) -> Result<String> {
    let header = GridHeader::for_grid(g)?;
    let mut obj = match serde_json::to_value(&header).expect("header serializes") {
        Value::Object(m) => m,
        _ => unreachable!(),
    };
    let values: Vec<Value> = match g {
        AnyGrid::Float(f) => f.cells().iter().map(|&v| Value::from(v)).collect(),
        AnyGrid::Fixed(_) => raw_values(g)?
            .into_iter()
            .map(|b| Value::from(i64::from_le_bytes(b)))
            .collect(),
    };
    obj.insert("values".into(), Value::Array(values));
    let mut s = serde_json::to_string(&Value::Object(obj)).expect("grid serializes");
    s.push('\n');
    Ok(s)
}

/// Save as a payload with sidecar, or as one JSON document when `path`
/// ends in `.json`.
pub fn save_any(g: &AnyGrid, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        fs::write(path, to_json_string(g)?)?;
        Ok(())
    } else {
        save(g, path)
    }
}

/// The worked 1D example bundled with the crate: `L = 2`, value 4 on
/// `[3/4, 1)` and 0 elsewhere.
pub fn bundled_example() -> AnyGrid {
    from_json_str(include_str!("../data/example_1d_l2.json")).expect("bundled example is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen, GeneratorSpec, Kind};
    use crate::grid::GridMode;

    fn sample(mode: GridMode) -> AnyGrid {
        gen(&GeneratorSpec {
            kind: Kind::UniformRandom,
            n: 2,
            level: 2,
            seed: 3,
            mode,
        })
        .unwrap()
    }

    fn same(a: &AnyGrid, b: &AnyGrid) -> bool {
        match (a, b) {
            (AnyGrid::Fixed(x), AnyGrid::Fixed(y)) => x.denom() == y.denom() && x.cells() == y.cells(),
            (AnyGrid::Float(x), AnyGrid::Float(y)) => x
                .cells()
                .iter()
                .zip(y.cells())
                .all(|(u, v)| u.to_bits() == v.to_bits()),
            _ => false,
        }
    }

    #[test]
    fn round_trip_both_modes() {
        let dir = tempfile::tempdir().unwrap();
        for (i, mode) in [GridMode::Fixed(16), GridMode::F64].into_iter().enumerate() {
            let g = sample(mode);
            let p = dir.path().join(format!("g{i}.bin"));
            save(&g, &p).unwrap();
            assert!(same(&g, &load(&p).unwrap()));
            assert!(same(&g, &load(&header_path(&p)).unwrap()));
            let j = dir.path().join(format!("g{i}.json"));
            save_any(&g, &j).unwrap();
            assert!(same(&g, &load(&j).unwrap()));
        }
    }

    #[test]
    fn fixed_sixteen_loads_exact() {
        let g = from_json_str(r#"{"n":1,"L":1,"mode":"fixed","denom":16,"values":[1,2,3,4,5,6]}"#)
            .unwrap();
        assert_eq!(g.mode(), GridMode::Fixed(16));
    }

    #[test]
    fn malformed_headers_name_the_field() {
        let cases = [
            (r#"{"L":1,"mode":"f64","values":[]}"#, "n"),
            (r#"{"n":1,"L":1,"mode":"fixed","values":[1,2,3,4,5,6]}"#, "denom"),
            (r#"{"n":1,"L":1,"mode":"f32","values":[1,2,3,4,5,6]}"#, "mode"),
            (r#"{"n":1,"L":1,"mode":"f64","values":[1,2,3]}"#, "values"),
            (r#"{"n":1,"L":1,"mode":"f64","order":"space-fastest","values":[1,2,3,4,5,6]}"#, "order"),
        ];
        for (text, want) in cases {
            match from_json_str(text) {
                Err(Error::Format { field, .. }) => assert_eq!(field, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn sidecar_requires_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.bin");
        save(&sample(GridMode::F64), &p).unwrap();
        fs::write(header_path(&p), r#"{"n":2,"L":2,"mode":"f64","order":"time-fastest"}"#).unwrap();
        assert!(matches!(load(&p), Err(Error::Format { field, .. }) if field == "version"));
    }

    #[test]
    fn bundled_example_blocks() {
        let g = bundled_example();
        let AnyGrid::Fixed(f) = g else { panic!() };
        assert_eq!(f.cells(), &[0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0]);
    }
}
