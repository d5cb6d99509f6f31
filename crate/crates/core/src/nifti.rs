//! NIfTI-1 reader and writer for integer label maps.
//!
//! Supports single-file (`n+1`) and header/image pair (`ni1`) layouts in
//! either byte order, optionally gzip-compressed. Extensions are skipped via
//! `vox_offset`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{Affine, LabelVolume};

pub const HEADER_SIZE: usize = 348;
/// `vox_offset` used by the writer: header plus the 4-byte extension flag.
pub const WRITE_VOX_OFFSET: usize = 352;
pub const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";
pub const MAGIC_PAIR: [u8; 4] = *b"ni1\0";

/// Maximum distance from an integer tolerated for float-encoded labels.
const INTEGRALITY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl DataType {
    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => DataType::Uint8,
            4 => DataType::Int16,
            8 => DataType::Int32,
            16 => DataType::Float32,
            64 => DataType::Float64,
            other => {
                return Err(Error::Format {
                    field: "datatype",
                    reason: format!("unsupported datatype code {other}"),
                })
            }
        })
    }

    pub fn code(self) -> i16 {
        match self {
            DataType::Uint8 => 2,
            DataType::Int16 => 4,
            DataType::Int32 => 8,
            DataType::Float32 => 16,
            DataType::Float64 => 64,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            DataType::Uint8 => 1,
            DataType::Int16 => 2,
            DataType::Int32 | DataType::Float32 => 4,
            DataType::Float64 => 8,
        }
    }

    pub fn bitpix(self) -> i16 {
        self.bytes() as i16 * 8
    }
}

/// The subset of the 348-byte header this crate interprets.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern_b: f32,
    pub quatern_c: f32,
    pub quatern_d: f32,
    pub qoffset_x: f32,
    pub qoffset_y: f32,
    pub qoffset_z: f32,
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub xyzt_units: u8,
    pub magic: [u8; 4],
}

impl Default for NiftiHeader {
    fn default() -> Self {
        NiftiHeader {
            sizeof_hdr: HEADER_SIZE as i32,
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            datatype: DataType::Uint8.code(),
            bitpix: DataType::Uint8.bitpix(),
            pixdim: [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            vox_offset: WRITE_VOX_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            qform_code: 0,
            sform_code: 0,
            quatern_b: 0.0,
            quatern_c: 0.0,
            quatern_d: 0.0,
            qoffset_x: 0.0,
            qoffset_y: 0.0,
            qoffset_z: 0.0,
            srow_x: [1.0, 0.0, 0.0, 0.0],
            srow_y: [0.0, 1.0, 0.0, 0.0],
            srow_z: [0.0, 0.0, 1.0, 0.0],
            xyzt_units: 2,
            magic: MAGIC_SINGLE,
        }
    }
}

/// Where the voxel-to-world transform came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffineSource {
    Sform,
    Qform,
    Pixdim,
}

/// How a file was decoded; surfaced so callers can log conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadReport {
    pub byte_order: ByteOrder,
    pub datatype: DataType,
    pub affine_source: AffineSource,
    /// Both sform and qform were set; sform was used.
    pub sform_over_qform: bool,
    pub gzipped: bool,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    order: ByteOrder,
}

impl Cursor<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.bytes[off..off + N]);
        a
    }
    fn i16(&self, off: usize) -> i16 {
        match self.order {
            ByteOrder::Little => i16::from_le_bytes(self.arr(off)),
            ByteOrder::Big => i16::from_be_bytes(self.arr(off)),
        }
    }
    fn i32(&self, off: usize) -> i32 {
        match self.order {
            ByteOrder::Little => i32::from_le_bytes(self.arr(off)),
            ByteOrder::Big => i32::from_be_bytes(self.arr(off)),
        }
    }
    fn f32(&self, off: usize) -> f32 {
        match self.order {
            ByteOrder::Little => f32::from_le_bytes(self.arr(off)),
            ByteOrder::Big => f32::from_be_bytes(self.arr(off)),
        }
    }
    fn f64(&self, off: usize) -> f64 {
        match self.order {
            ByteOrder::Little => f64::from_le_bytes(self.arr(off)),
            ByteOrder::Big => f64::from_be_bytes(self.arr(off)),
        }
    }
    fn f32x4(&self, off: usize) -> [f32; 4] {
        [self.f32(off), self.f32(off + 4), self.f32(off + 8), self.f32(off + 12)]
    }
}

fn format_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Format { field, reason: reason.into() }
}

impl NiftiHeader {
    /// Parses and validates a header, detecting byte order from `sizeof_hdr`.
    pub fn parse(bytes: &[u8]) -> Result<(NiftiHeader, ByteOrder)> {
        if bytes.len() < HEADER_SIZE {
            return Err(format_err(
                "sizeof_hdr",
                format!("file holds {} bytes, header needs {HEADER_SIZE}", bytes.len()),
            ));
        }
        let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
        let order = if le == HEADER_SIZE as i32 {
            ByteOrder::Little
        } else if be == HEADER_SIZE as i32 {
            ByteOrder::Big
        } else {
            return Err(format_err("sizeof_hdr", format!("expected 348, got {le} (LE) / {be} (BE)")));
        };
        let c = Cursor { bytes, order };
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = c.i16(40 + 2 * i);
        }
        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = c.f32(76 + 4 * i);
        }
        let hdr = NiftiHeader {
            sizeof_hdr: HEADER_SIZE as i32,
            dim,
            datatype: c.i16(70),
            bitpix: c.i16(72),
            pixdim,
            vox_offset: c.f32(108),
            scl_slope: c.f32(112),
            scl_inter: c.f32(116),
            xyzt_units: bytes[123],
            qform_code: c.i16(252),
            sform_code: c.i16(254),
            quatern_b: c.f32(256),
            quatern_c: c.f32(260),
            quatern_d: c.f32(264),
            qoffset_x: c.f32(268),
            qoffset_y: c.f32(272),
            qoffset_z: c.f32(276),
            srow_x: c.f32x4(280),
            srow_y: c.f32x4(296),
            srow_z: c.f32x4(312),
            magic: c.arr(344),
        };
        hdr.validate()?;
        Ok((hdr, order))
    }

    fn validate(&self) -> Result<()> {
        if self.magic != MAGIC_SINGLE && self.magic != MAGIC_PAIR {
            return Err(format_err("magic", format!("expected \"n+1\\0\" or \"ni1\\0\", got {:?}", self.magic)));
        }
        match self.dim[0] {
            3 => {}
            4 if self.dim[4] == 1 => {}
            4 => return Err(format_err("dim", format!("4D volumes need dim[4] == 1, got {}", self.dim[4]))),
            n => return Err(format_err("dim", format!("dim[0] must be 3 or 4, got {n}"))),
        }
        if let Some(d) = self.dim[1..4].iter().find(|&&d| d < 1) {
            return Err(format_err("dim", format!("spatial dims must be >= 1, got {d}")));
        }
        let dt = DataType::from_code(self.datatype)?;
        if self.bitpix != dt.bitpix() {
            return Err(format_err(
                "bitpix",
                format!("datatype {} implies bitpix {}, header says {}", self.datatype, dt.bitpix(), self.bitpix),
            ));
        }
        if !self.vox_offset.is_finite() || self.vox_offset < 0.0 || self.vox_offset.fract() != 0.0 {
            return Err(format_err("vox_offset", format!("invalid offset {}", self.vox_offset)));
        }
        if self.magic == MAGIC_SINGLE && (self.vox_offset as usize) < HEADER_SIZE {
            return Err(format_err("vox_offset", format!("single-file offset {} lies inside the header", self.vox_offset)));
        }
        if !self.scl_slope.is_finite() || !self.scl_inter.is_finite() {
            return Err(format_err("scl_slope", "non-finite scaling"));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.dim[1] as usize, self.dim[2] as usize, self.dim[3] as usize]
    }

    pub fn datatype(&self) -> Result<DataType> {
        DataType::from_code(self.datatype)
    }

    /// Voxel-to-world transform following the NIfTI-1 precedence:
    /// sform, then qform, then bare pixdim scaling.
    pub fn affine(&self) -> Result<(Affine, AffineSource)> {
        let spacing = |field| -> Result<[f64; 3]> {
            let s = [self.pixdim[1] as f64, self.pixdim[2] as f64, self.pixdim[3] as f64];
            if s.iter().any(|&v| !v.is_finite() || v <= 0.0) {
                return Err(format_err(field, format!("pixdim[1..3] must be positive, got {s:?}")));
            }
            Ok(s)
        };
        if self.sform_code > 0 {
            let row = |r: [f32; 4]| r.map(|v| v as f64);
            let a = Affine::from_rows([row(self.srow_x), row(self.srow_y), row(self.srow_z)]);
            if !a.is_finite() {
                return Err(format_err("srow_x", "non-finite sform"));
            }
            return Ok((a, AffineSource::Sform));
        }
        if self.qform_code > 0 {
            let [dx, dy, dz] = spacing("pixdim")?;
            let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
            let (mut b, mut c, mut d) = (self.quatern_b as f64, self.quatern_c as f64, self.quatern_d as f64);
            let mut a = 1.0 - (b * b + c * c + d * d);
            if a < 1e-7 {
                // 180 degree rotation: renormalise (b, c, d) and set a = 0
                let s = 1.0 / (b * b + c * c + d * d).sqrt();
                b *= s;
                c *= s;
                d *= s;
                a = 0.0;
            } else {
                a = a.sqrt();
            }
            let r = [
                [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
                [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
                [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
            ];
            let scale = [dx, dy, dz * qfac];
            let off = [self.qoffset_x as f64, self.qoffset_y as f64, self.qoffset_z as f64];
            let mut rows = [[0.0; 4]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    rows[i][j] = r[i][j] * scale[j];
                }
                rows[i][3] = off[i];
            }
            let aff = Affine::from_rows(rows);
            if !aff.is_finite() {
                return Err(format_err("quatern_b", "quaternion does not yield a finite rotation"));
            }
            return Ok((aff, AffineSource::Qform));
        }
        let s = spacing("pixdim")?;
        Ok((Affine::from_scale_translation(s, [0.0; 3]), AffineSource::Pixdim))
    }

    /// Serialises the header (plus zero extension flag) as little-endian bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = vec![0u8; WRITE_VOX_OFFSET];
        let put = |b: &mut Vec<u8>, off: usize, bytes: &[u8]| b[off..off + bytes.len()].copy_from_slice(bytes);
        put(&mut b, 0, &self.sizeof_hdr.to_le_bytes());
        b[38] = b'r';
        for (i, d) in self.dim.iter().enumerate() {
            put(&mut b, 40 + 2 * i, &d.to_le_bytes());
        }
        put(&mut b, 70, &self.datatype.to_le_bytes());
        put(&mut b, 72, &self.bitpix.to_le_bytes());
        for (i, p) in self.pixdim.iter().enumerate() {
            put(&mut b, 76 + 4 * i, &p.to_le_bytes());
        }
        put(&mut b, 108, &self.vox_offset.to_le_bytes());
        put(&mut b, 112, &self.scl_slope.to_le_bytes());
        put(&mut b, 116, &self.scl_inter.to_le_bytes());
        b[123] = self.xyzt_units;
        put(&mut b, 252, &self.qform_code.to_le_bytes());
        put(&mut b, 254, &self.sform_code.to_le_bytes());
        for (i, v) in [self.quatern_b, self.quatern_c, self.quatern_d, self.qoffset_x, self.qoffset_y, self.qoffset_z]
            .iter()
            .enumerate()
        {
            put(&mut b, 256 + 4 * i, &v.to_le_bytes());
        }
        for (r, row) in [self.srow_x, self.srow_y, self.srow_z].iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                put(&mut b, 280 + 16 * r + 4 * i, &v.to_le_bytes());
            }
        }
        put(&mut b, 344, &self.magic);
        b
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

fn read_maybe_gz(path: &Path) -> Result<(Vec<u8>, bool)> {
    let raw = fs::read(path)?;
    if is_gzip(&raw) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| format_err("gzip", e.to_string()))?;
        Ok((out, true))
    } else {
        Ok((raw, false))
    }
}

fn decode_voxels(hdr: &NiftiHeader, order: ByteOrder, data: &[u8]) -> Result<Vec<u8>> {
    let dt = hdr.datatype()?;
    let n: usize = hdr.dims().iter().product();
    let need = n * dt.bytes();
    if data.len() < need {
        return Err(format_err(
            "vox_offset",
            format!("truncated data: need {need} bytes for {n} voxels, found {}", data.len()),
        ));
    }
    let slope = if hdr.scl_slope == 0.0 { 1.0 } else { hdr.scl_slope as f64 };
    let inter = hdr.scl_inter as f64;
    let identity_scaling = slope == 1.0 && inter == 0.0;
    if dt == DataType::Uint8 && identity_scaling {
        return Ok(data[..n].to_vec());
    }
    let c = Cursor { bytes: data, order };
    let mut out = Vec::with_capacity(n);
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let raw = match dt {
            DataType::Uint8 => data[i] as f64,
            DataType::Int16 => c.i16(2 * i) as f64,
            DataType::Int32 => c.i32(4 * i) as f64,
            DataType::Float32 => c.f32(4 * i) as f64,
            DataType::Float64 => c.f64(8 * i),
        };
        let v = slope * raw + inter;
        let r = v.round();
        if !v.is_finite() || (v - r).abs() > INTEGRALITY_TOL {
            return Err(format_err("voxel data", format!("voxel {i} holds non-integral label value {v}")));
        }
        if !(0.0..=255.0).contains(&r) {
            return Err(format_err("voxel data", format!("voxel {i} label {r} outside 0..=255")));
        }
        out.push(r as u8);
    }
    Ok(out)
}

/// Decodes an in-memory single-file NIfTI-1 image (already decompressed).
pub fn parse_single_file(bytes: &[u8]) -> Result<(LabelVolume, ReadReport)> {
    let (hdr, order) = NiftiHeader::parse(bytes)?;
    if hdr.magic != MAGIC_SINGLE {
        return Err(format_err("magic", "header/image pair needs the companion .img file"));
    }
    build_volume(&hdr, order, &bytes[hdr.vox_offset as usize..], false)
}

fn build_volume(hdr: &NiftiHeader, order: ByteOrder, data: &[u8], gzipped: bool) -> Result<(LabelVolume, ReadReport)> {
    let labels = decode_voxels(hdr, order, data)?;
    let (affine, affine_source) = hdr.affine()?;
    let vol = LabelVolume::new(hdr.dims(), labels, affine).map_err(|e| format_err("srow_x", e.to_string()))?;
    let report = ReadReport {
        byte_order: order,
        datatype: hdr.datatype()?,
        affine_source,
        sform_over_qform: hdr.sform_code > 0 && hdr.qform_code > 0,
        gzipped,
    };
    Ok((vol, report))
}

fn companion_image(path: &Path) -> Option<PathBuf> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_suffix(".hdr.gz").or_else(|| name.strip_suffix(".hdr"))?;
    [".img", ".img.gz"]
        .iter()
        .map(|ext| path.with_file_name(format!("{stem}{ext}")))
        .find(|p| p.exists())
}

/// Reads a label volume, reporting how the header was interpreted.
pub fn read_volume_with_report(path: &Path) -> Result<(LabelVolume, ReadReport)> {
    let (bytes, gzipped) = read_maybe_gz(path)?;
    let (hdr, order) = NiftiHeader::parse(&bytes)?;
    let (vol, mut report) = if hdr.magic == MAGIC_PAIR {
        let img = companion_image(path).ok_or_else(|| format_err("magic", "ni1 header without a companion .img file"))?;
        let (img_bytes, _) = read_maybe_gz(&img)?;
        let off = hdr.vox_offset as usize;
        if off > img_bytes.len() {
            return Err(format_err("vox_offset", "offset beyond end of image file"));
        }
        build_volume(&hdr, order, &img_bytes[off..], gzipped)?
    } else {
        let off = hdr.vox_offset as usize;
        if off > bytes.len() {
            return Err(format_err("vox_offset", format!("offset {off} beyond end of file ({} bytes)", bytes.len())));
        }
        build_volume(&hdr, order, &bytes[off..], gzipped)?
    };
    report.gzipped = gzipped;
    if report.sform_over_qform {
        log::debug!("{}: both sform and qform set, using sform", path.display());
    }
    Ok((vol, report))
}

pub fn read_volume(path: &Path) -> Result<LabelVolume> {
    read_volume_with_report(path).map(|(v, _)| v)
}

/// Header the writer emits for `v`: uint8, sform code 1, scale-free.
pub fn header_for(v: &LabelVolume) -> NiftiHeader {
    let [nx, ny, nz] = v.dims();
    let s = v.spacing();
    let rows = v.affine().rows().map(|r| r.map(|x| x as f32));
    NiftiHeader {
        dim: [3, nx as i16, ny as i16, nz as i16, 1, 1, 1, 1],
        pixdim: [1.0, s[0] as f32, s[1] as f32, s[2] as f32, 0.0, 0.0, 0.0, 0.0],
        sform_code: 1,
        srow_x: rows[0],
        srow_y: rows[1],
        srow_z: rows[2],
        ..NiftiHeader::default()
    }
}

/// Encodes `v` as an uncompressed single-file NIfTI-1 image.
pub fn encode_volume(v: &LabelVolume) -> Result<Vec<u8>> {
    if v.dims().iter().any(|&d| d > i16::MAX as usize) {
        return Err(format_err("dim", format!("dims {:?} exceed the NIfTI-1 limit of 32767", v.dims())));
    }
    let mut bytes = header_for(v).to_bytes();
    bytes.extend_from_slice(v.data());
    Ok(bytes)
}

/// Writes a single-file NIfTI-1 image; gzip-compressed when the path ends in `.gz`.
pub fn write_volume(v: &LabelVolume, path: &Path) -> Result<()> {
    let bytes = encode_volume(v)?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let file = fs::File::create(path)?;
    if gz {
        let mut enc = GzEncoder::new(std::io::BufWriter::new(file), Compression::fast());
        enc.write_all(&bytes)?;
        enc.finish()?.flush()?;
    } else {
        let mut w = std::io::BufWriter::new(file);
        w.write_all(&bytes)?;
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Builds a minimal 352-byte header by hand from the field table.
    fn hand_header(order: ByteOrder, datatype: i16, bitpix: i16, dims: [i16; 3]) -> Vec<u8> {
        let mut b = vec![0u8; 352];
        let w16 = |b: &mut Vec<u8>, off: usize, v: i16| {
            let bytes = match order {
                ByteOrder::Little => v.to_le_bytes(),
                ByteOrder::Big => v.to_be_bytes(),
            };
            b[off..off + 2].copy_from_slice(&bytes);
        };
        let w32 = |b: &mut Vec<u8>, off: usize, v: [u8; 4], le: [u8; 4]| {
            b[off..off + 4].copy_from_slice(if order == ByteOrder::Little { &le } else { &v });
        };
        w32(&mut b, 0, 348i32.to_be_bytes(), 348i32.to_le_bytes());
        w16(&mut b, 40, 3);
        for (i, d) in dims.iter().enumerate() {
            w16(&mut b, 42 + 2 * i, *d);
        }
        w16(&mut b, 70, datatype);
        w16(&mut b, 72, bitpix);
        for i in 1..4 {
            w32(&mut b, 76 + 4 * i, 1.0f32.to_be_bytes(), 1.0f32.to_le_bytes());
        }
        w32(&mut b, 108, 352.0f32.to_be_bytes(), 352.0f32.to_le_bytes());
        b[344..348].copy_from_slice(b"n+1\0");
        b
    }

    #[test]
    fn parses_hand_built_uint8_header() {
        let mut bytes = hand_header(ByteOrder::Little, 2, 8, [2, 2, 2]);
        bytes.extend(0u8..8);
        let (v, report) = parse_single_file(&bytes).unwrap();
        assert_eq!(v.dims(), [2, 2, 2]);
        assert_eq!(v.data(), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(report.affine_source, AffineSource::Pixdim);
        assert_eq!(v.get(1, 1, 1), Some(7));
    }

    #[test]
    fn parses_big_endian_int16() {
        let mut bytes = hand_header(ByteOrder::Big, 4, 16, [2, 1, 1]);
        bytes.extend(3i16.to_be_bytes());
        bytes.extend(5i16.to_be_bytes());
        let (v, report) = parse_single_file(&bytes).unwrap();
        assert_eq!(report.byte_order, ByteOrder::Big);
        assert_eq!(v.data(), &[3, 5]);
    }

    #[test]
    fn float_labels_need_integral_values() {
        let mut bytes = hand_header(ByteOrder::Little, 16, 32, [2, 1, 1]);
        bytes.extend(2.0004f32.to_le_bytes());
        bytes.extend(6.9999f32.to_le_bytes());
        let (v, _) = parse_single_file(&bytes).unwrap();
        assert_eq!(v.data(), &[2, 7]);

        let mut bytes = hand_header(ByteOrder::Little, 16, 32, [2, 1, 1]);
        bytes.extend(2.5f32.to_le_bytes());
        bytes.extend(1.0f32.to_le_bytes());
        let err = parse_single_file(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { field: "voxel data", .. }), "{err}");
    }

    #[test]
    fn scaling_applied_and_zero_slope_is_identity() {
        let mut bytes = hand_header(ByteOrder::Little, 2, 8, [2, 1, 1]);
        bytes[112..116].copy_from_slice(&2.0f32.to_le_bytes());
        bytes[116..120].copy_from_slice(&1.0f32.to_le_bytes());
        bytes.extend([1u8, 3]);
        assert_eq!(parse_single_file(&bytes).unwrap().0.data(), &[3, 7]);

        let mut bytes = hand_header(ByteOrder::Little, 2, 8, [2, 1, 1]);
        bytes[112..116].copy_from_slice(&0.0f32.to_le_bytes());
        bytes.extend([1u8, 3]);
        assert_eq!(parse_single_file(&bytes).unwrap().0.data(), &[1, 3]);
    }

    #[test]
    fn malformed_headers_name_the_field() {
        let base = {
            let mut b = hand_header(ByteOrder::Little, 2, 8, [2, 1, 1]);
            b.extend([0u8, 1]);
            b
        };
        #[allow(clippy::type_complexity)]
        let cases: Vec<(Box<dyn Fn(&mut Vec<u8>)>, &str)> = vec![
            (Box::new(|b| b[0..4].copy_from_slice(&349i32.to_le_bytes())), "sizeof_hdr"),
            (Box::new(|b| b[344..348].copy_from_slice(b"abcd")), "magic"),
            (Box::new(|b| b[70..72].copy_from_slice(&32i16.to_le_bytes())), "datatype"),
            (Box::new(|b| b[72..74].copy_from_slice(&16i16.to_le_bytes())), "bitpix"),
            (Box::new(|b| b[40..42].copy_from_slice(&5i16.to_le_bytes())), "dim"),
            (
                Box::new(|b| {
                    b[40..42].copy_from_slice(&4i16.to_le_bytes());
                    b[48..50].copy_from_slice(&3i16.to_le_bytes());
                }),
                "dim",
            ),
            (Box::new(|b| b.truncate(353)), "vox_offset"),
            (Box::new(|b| b.truncate(100)), "sizeof_hdr"),
        ];
        for (mutate, field) in cases {
            let mut b = base.clone();
            mutate(&mut b);
            match parse_single_file(&b) {
                Err(Error::Format { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected format error on {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn four_d_with_singleton_time_is_accepted() {
        let mut b = hand_header(ByteOrder::Little, 2, 8, [2, 1, 1]);
        b[40..42].copy_from_slice(&4i16.to_le_bytes());
        b[48..50].copy_from_slice(&1i16.to_le_bytes());
        b.extend([4u8, 2]);
        assert_eq!(parse_single_file(&b).unwrap().0.data(), &[4, 2]);
    }

    #[test]
    fn qform_quaternion_affine() {
        // 90 degrees about z: (b, c, d) = (0, 0, sin 45)
        let v = LabelVolume::with_spacing([2, 2, 2], vec![0; 8], [1.0; 3]).unwrap();
        let mut hdr = header_for(&v);
        hdr.sform_code = 0;
        hdr.qform_code = 1;
        hdr.quatern_d = std::f32::consts::FRAC_1_SQRT_2;
        hdr.pixdim = [-1.0, 0.5, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0];
        hdr.qoffset_x = 10.0;
        let (a, src) = hdr.affine().unwrap();
        assert_eq!(src, AffineSource::Qform);
        let expected = [[0.0, -2.0, 0.0, 10.0], [0.5, 0.0, 0.0, 0.0], [0.0, 0.0, -3.0, 0.0]];
        for i in 0..3 {
            for j in 0..4 {
                assert_abs_diff_eq!(a.0[i][j], expected[i][j], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn sform_wins_over_qform() {
        let v = LabelVolume::new([2, 2, 2], vec![0; 8], Affine::from_scale_translation([0.8; 3], [1.0, 2.0, 3.0])).unwrap();
        let mut hdr = header_for(&v);
        hdr.qform_code = 1;
        let mut bytes = hdr.to_bytes();
        bytes.extend(v.data());
        let (read, report) = parse_single_file(&bytes).unwrap();
        assert_eq!(report.affine_source, AffineSource::Sform);
        assert!(report.sform_over_qform);
        assert!(read.affine().max_abs_diff(v.affine()) < 1e-6);
    }

    #[test]
    fn writer_layout_constants() {
        let v = LabelVolume::with_spacing([3, 2, 1], vec![0, 1, 2, 3, 4, 5], [0.8; 3]).unwrap();
        let bytes = encode_volume(&v).unwrap();
        assert_eq!(&bytes[0..4], &348i32.to_le_bytes());
        assert_eq!(&bytes[344..348], b"n+1\0");
        assert_eq!(f32::from_le_bytes(bytes[108..112].try_into().unwrap()), 352.0);
        assert_eq!(i16::from_le_bytes(bytes[70..72].try_into().unwrap()), 2);
        assert_eq!(i16::from_le_bytes(bytes[254..256].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 352 + 6);
    }

    #[test]
    fn file_roundtrip_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let a = Affine::from_rows([[0.0, -0.5, 0.0, 12.5], [0.75, 0.0, 0.0, -3.0], [0.0, 0.0, 1.25, 7.0]]);
        let data: Vec<u8> = (0..4 * 3 * 5).map(|i| (i % 8) as u8).collect();
        let v = LabelVolume::new([4, 3, 5], data, a).unwrap();
        for name in ["a.nii", "a.nii.gz"] {
            let p = dir.path().join(name);
            write_volume(&v, &p).unwrap();
            let raw = fs::read(&p).unwrap();
            assert_eq!(is_gzip(&raw), name.ends_with(".gz"));
            let (r, report) = read_volume_with_report(&p).unwrap();
            assert_eq!(report.gzipped, name.ends_with(".gz"));
            assert_eq!(r.dims(), v.dims());
            assert_eq!(r.data(), v.data());
            assert!(r.affine().max_abs_diff(v.affine()) < 1e-6);
        }
    }

    #[test]
    fn header_image_pair() {
        let dir = tempfile::tempdir().unwrap();
        let v = LabelVolume::with_spacing([2, 2, 1], vec![1, 2, 3, 4], [1.0; 3]).unwrap();
        let mut hdr = header_for(&v);
        hdr.magic = MAGIC_PAIR;
        hdr.vox_offset = 0.0;
        fs::write(dir.path().join("x.hdr"), &hdr.to_bytes()[..HEADER_SIZE]).unwrap();
        fs::write(dir.path().join("x.img"), v.data()).unwrap();
        let r = read_volume(&dir.path().join("x.hdr")).unwrap();
        assert_eq!(r.data(), v.data());
        fs::remove_file(dir.path().join("x.img")).unwrap();
        assert!(read_volume(&dir.path().join("x.hdr")).is_err());
    }
}
