//! PLY reader/writer for the `vertex` element (ascii and binary little-endian).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{PointCloud, SurfacePoint};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        location: location.into(),
        message: message.into(),
    }
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    read_ply(BufReader::new(File::open(path)?))
}

pub fn read_ply<R: BufRead>(mut reader: R) -> Result<PointCloud> {
    let mut line_no = 0usize;
    let mut offset = 0usize;
    let next_line = |reader: &mut R, line_no: &mut usize, offset: &mut usize| -> Result<String> {
        let mut s = String::new();
        let n = reader.read_line(&mut s)?;
        if n == 0 {
            return Err(parse_err(format!("line {}", *line_no + 1), "unexpected end of file"));
        }
        *line_no += 1;
        *offset += n;
        Ok(s.trim_end_matches(['\n', '\r']).to_string())
    };

    if next_line(&mut reader, &mut line_no, &mut offset)?.trim() != "ply" {
        return Err(parse_err("line 1", "missing `ply` magic"));
    }
    let mut encoding = None;
    let mut frame = String::from("unknown");
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line(&mut reader, &mut line_no, &mut offset)?;
        let loc = format!("line {line_no}");
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                encoding = Some(match tok.next() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLittleEndian,
                    other => return Err(parse_err(loc, format!("unsupported format {other:?}"))),
                });
            }
            Some("comment") => {
                if tok.next() == Some("frame") {
                    if let Some(f) = tok.next() {
                        frame = f.to_string();
                    }
                }
            }
            Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| parse_err(&loc, "element name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(&loc, "element count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(&loc, "property before element"))?;
                let ty = tok.next().ok_or_else(|| parse_err(&loc, "property type"))?;
                if ty == "list" {
                    if el.name == "vertex" {
                        return Err(parse_err(loc, "list properties on vertex are unsupported"));
                    }
                    // Lists only matter for elements we skip.
                    el.props.push(("list".into(), Scalar::U8));
                    continue;
                }
                let scalar =
                    Scalar::parse(ty).ok_or_else(|| parse_err(&loc, format!("type `{ty}`")))?;
                let name = tok.next().ok_or_else(|| parse_err(&loc, "property name"))?;
                el.props.push((name.to_string(), scalar));
            }
            Some("end_header") => break,
            Some(other) => return Err(parse_err(loc, format!("unexpected keyword `{other}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err("header", "missing format line"))?;
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::MissingField("element vertex".into()))?;
    if encoding == PlyEncoding::BinaryLittleEndian && vertex_pos != 0 {
        return Err(parse_err("header", "binary files must list `vertex` first"));
    }
    let vertex = &elements[vertex_pos];
    let find = |n: &str| vertex.props.iter().position(|(p, _)| p == n);
    let (ix, iy, iz) = (
        find("x").ok_or_else(|| Error::MissingField("x".into()))?,
        find("y").ok_or_else(|| Error::MissingField("y".into()))?,
        find("z").ok_or_else(|| Error::MissingField("z".into()))?,
    );
    let normal_idx = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let color_idx = match (find("red"), find("green"), find("blue")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };

    let make_point = |v: &[f64]| SurfacePoint {
        position: Vec3::new(v[ix], v[iy], v[iz]),
        normal: normal_idx.map_or(Vec3::zeros(), |n| Vec3::new(v[n[0]], v[n[1]], v[n[2]])),
        color: color_idx.map_or([200, 200, 200], |c| {
            [v[c[0]], v[c[1]], v[c[2]]].map(|x| x.clamp(0.0, 255.0) as u8)
        }),
    };

    let mut points = Vec::with_capacity(vertex.count);
    let nprops = vertex.props.len();
    let mut values = vec![0.0; nprops];
    match encoding {
        PlyEncoding::Ascii => {
            // Skip rows of elements declared before `vertex`.
            let skip: usize = elements[..vertex_pos].iter().map(|e| e.count).sum();
            for _ in 0..skip {
                next_line(&mut reader, &mut line_no, &mut offset)?;
            }
            for _ in 0..vertex.count {
                let line = next_line(&mut reader, &mut line_no, &mut offset)?;
                let mut n = 0;
                for (k, t) in line.split_whitespace().enumerate() {
                    if k >= nprops {
                        return Err(parse_err(format!("line {line_no}"), "too many values"));
                    }
                    let bad = || parse_err(format!("line {line_no}"), format!("bad number `{t}`"));
                    values[k] = if vertex.props[k].1 == Scalar::F32 {
                        t.parse::<f32>().map_err(|_| bad())? as f64
                    } else {
                        t.parse::<f64>().map_err(|_| bad())?
                    };
                    n += 1;
                }
                if n != nprops {
                    return Err(parse_err(
                        format!("line {line_no}"),
                        format!("expected {nprops} values, found {n}"),
                    ));
                }
                points.push(make_point(&values));
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            let stride: usize = vertex.props.iter().map(|(_, s)| s.size()).sum();
            let mut buf = vec![0u8; stride];
            for row in 0..vertex.count {
                reader.read_exact(&mut buf).map_err(|_| {
                    parse_err(
                        format!("byte offset {}", offset + row * stride),
                        format!("truncated vertex data: row {row} of {}", vertex.count),
                    )
                })?;
                let mut at = 0;
                for (k, (_, s)) in vertex.props.iter().enumerate() {
                    values[k] = s.decode(&buf[at..at + s.size()]);
                    at += s.size();
                }
                points.push(make_point(&values));
            }
        }
    }
    if points.iter().any(|p| !p.position.iter().all(|v| v.is_finite())) {
        return Err(parse_err("vertex data", "non-finite position"));
    }
    Ok(PointCloud {
        points,
        frame,
        has_normals: normal_idx.is_some(),
    })
}

pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>, encoding: PlyEncoding) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply(cloud, &mut w, encoding)?;
    w.flush()?;
    Ok(())
}

pub fn write_ply<W: Write>(cloud: &PointCloud, w: &mut W, encoding: PlyEncoding) -> Result<()> {
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply")?;
    writeln!(w, "format {format} 1.0")?;
    if !cloud.frame.is_empty() {
        writeln!(w, "comment frame {}", cloud.frame.replace(char::is_whitespace, "_"))?;
    }
    writeln!(w, "element vertex {}", cloud.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property float {p}")?;
    }
    if cloud.has_normals {
        for p in ["nx", "ny", "nz"] {
            writeln!(w, "property float {p}")?;
        }
    }
    for p in ["red", "green", "blue"] {
        writeln!(w, "property uchar {p}")?;
    }
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        let mut floats = vec![p.position.x as f32, p.position.y as f32, p.position.z as f32];
        if cloud.has_normals {
            floats.extend([p.normal.x as f32, p.normal.y as f32, p.normal.z as f32]);
        }
        match encoding {
            PlyEncoding::Ascii => {
                let nums: Vec<String> = floats.iter().map(|f| f.to_string()).collect();
                writeln!(
                    w,
                    "{} {} {} {}",
                    nums.join(" "),
                    p.color[0],
                    p.color[1],
                    p.color[2]
                )?;
            }
            PlyEncoding::BinaryLittleEndian => {
                for f in floats {
                    w.write_all(&f.to_le_bytes())?;
                }
                w.write_all(&p.color)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const THREE: &str = "ply\nformat ascii 1.0\ncomment frame face\nelement vertex 3\n\
property float x\nproperty float y\nproperty float z\n\
property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n\
0 0 0 255 0 0\n0.001 0 0.5 0 255 0\n0 0.002 0.5 0 0 255\n";

    #[test]
    fn ascii_fixture() {
        let cloud = read_ply(THREE.as_bytes()).unwrap();
        assert_eq!(cloud.len(), 3);
        assert_eq!(cloud.frame, "face");
        assert!(!cloud.has_normals);
        assert_eq!(cloud.points[1].color, [0, 255, 0]);
        assert!((cloud.points[2].position.y - 0.002).abs() < 1e-9);
    }

    #[test]
    fn short_body_is_parse_error() {
        let bad = THREE.replace("element vertex 3", "element vertex 5");
        match read_ply(bad.as_bytes()) {
            Err(Error::Parse { location, .. }) => assert!(location.starts_with("line")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_coordinate_field() {
        let bad = THREE.replace("property float z\n", "");
        assert!(matches!(read_ply(bad.as_bytes()), Err(Error::MissingField(f)) if f == "z"));
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<SurfacePoint> = (0..10_000)
            .map(|_| {
                let p = Vec3::new(
                    rng.gen_range(-1.0f32..1.0) as f64,
                    rng.gen_range(-1.0f32..1.0) as f64,
                    rng.gen_range(-1.0f32..1.0) as f64,
                );
                SurfacePoint::new(p, Vec3::z())
            })
            .collect();
        let cloud = PointCloud::new(pts, "f");
        let mut bytes = Vec::new();
        write_ply(&cloud, &mut bytes, PlyEncoding::BinaryLittleEndian).unwrap();
        let back = read_ply(bytes.as_slice()).unwrap();
        assert_eq!(back.len(), cloud.len());
        for (a, b) in cloud.points.iter().zip(&back.points) {
            assert_eq!(a.position, b.position);
        }
        let truncated = &bytes[..bytes.len() - 7];
        assert!(matches!(read_ply(truncated), Err(Error::Parse { .. })));
    }

    proptest! {
        #[test]
        fn ascii_round_trip(coords in proptest::collection::vec((-10.0f32..10.0, -10.0f32..10.0, -10.0f32..10.0), 1..40)) {
            let cloud = PointCloud::new(
                coords.iter().map(|&(x, y, z)| SurfacePoint::new(Vec3::new(x as f64, y as f64, z as f64), Vec3::x())).collect(),
                "p",
            );
            let mut bytes = Vec::new();
            write_ply(&cloud, &mut bytes, PlyEncoding::Ascii).unwrap();
            let back = read_ply(bytes.as_slice()).unwrap();
            prop_assert_eq!(back.points, cloud.points);
        }
    }
}
