//! Single-file NIfTI-1 volume reading/writing and 2D slice extraction.
//!
//! Only the single-file layout (magic `n+1\0`, header + payload in one
//! `.nii`) is supported; dual-file `ni1\0` and NIfTI-2 are rejected so
//! failures stay explicit. Endianness is inferred from `sizeof_hdr`.
//! Gzip-wrapped input is detected by the `0x1f 0x8b` prefix, not the
//! file extension.

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use std::io::Read;
use std::path::Path;
use thiserror::Error;

/// NIfTI-1 header length in bytes.
pub const HEADER_LEN: usize = 348;
/// Byte offset of the voxel payload in streams we write.
pub const DEFAULT_VOX_OFFSET: usize = 352;

const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("header too short: need at least {HEADER_LEN} bytes, got {0}")]
    TooShort(usize),
    #[error("sizeof_hdr reads {0} little-endian; not 348 under either byte order")]
    BadSize(i32),
    #[error("bad magic {0:?}: only single-file NIfTI-1 (n+1) is supported")]
    BadMagic([u8; 4]),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("bitpix {bitpix} does not match datatype code {datatype}")]
    BitpixMismatch { datatype: i16, bitpix: i16 },
    #[error("invalid dim field: {0}")]
    BadDim(String),
    #[error("vox_offset {0} is before the end of the header")]
    BadVoxOffset(f32),
    #[error("voxel payload truncated: expected {expected} bytes past vox_offset, got {got}")]
    TruncatedData { expected: usize, got: usize },
    #[error("4D volume with time extent {0}: only singleton 4th dims are squeezed")]
    Unsupported4D(usize),
    #[error("volume data length {got} does not match extents product {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("non-finite intensity at linear index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VolumeError {
    /// Stable machine-readable code, prefixed with the subsystem name.
    pub fn code(&self) -> &'static str {
        match self {
            Self::TooShort(_) => "volume_io/TooShort",
            Self::BadSize(_) => "volume_io/BadSize",
            Self::BadMagic(_) => "volume_io/BadMagic",
            Self::UnsupportedDatatype(_) => "volume_io/UnsupportedDatatype",
            Self::BitpixMismatch { .. } => "volume_io/BitpixMismatch",
            Self::BadDim(_) => "volume_io/BadDim",
            Self::BadVoxOffset(_) => "volume_io/BadVoxOffset",
            Self::TruncatedData { .. } => "volume_io/TruncatedData",
            Self::Unsupported4D(_) => "volume_io/Unsupported4D",
            Self::DataLength { .. } => "volume_io/DataLength",
            Self::NonFinite(_) => "volume_io/NonFinite",
            Self::Io(_) => "volume_io/Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, VolumeError>;

/// Byte order of the on-disk stream, inferred while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

/// Voxel element types we read and write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i16)]
pub enum DataType {
    Uint8 = 2,
    Int16 = 4,
    Int32 = 8,
    Float32 = 16,
    Float64 = 64,
}

impl DataType {
    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Self::Uint8),
            4 => Ok(Self::Int16),
            8 => Ok(Self::Int32),
            16 => Ok(Self::Float32),
            64 => Ok(Self::Float64),
            other => Err(VolumeError::UnsupportedDatatype(other)),
        }
    }

    pub const fn code(self) -> i16 {
        self as i16
    }

    pub const fn byte_size(self) -> usize {
        match self {
            Self::Uint8 => 1,
            Self::Int16 => 2,
            Self::Int32 | Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }

    pub const ALL: [DataType; 5] = [
        DataType::Uint8,
        DataType::Int16,
        DataType::Int32,
        DataType::Float32,
        DataType::Float64,
    ];
}

impl std::str::FromStr for DataType {
    type Err = VolumeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u8" | "uint8" => Ok(Self::Uint8),
            "i16" | "int16" => Ok(Self::Int16),
            "i32" | "int32" => Ok(Self::Int32),
            "f32" | "float32" => Ok(Self::Float32),
            "f64" | "float64" => Ok(Self::Float64),
            _ => Err(VolumeError::UnsupportedDatatype(-1)),
        }
    }
}

/// Decoded NIfTI-1 header fields we act on.
///
/// `endianness` is inferred from how `sizeof_hdr` reads, not stored in
/// the file.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub datatype: DataType,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
    pub endianness: Endianness,
}

impl NiftiHeader {
    /// Rank (number of used dims), clamped into the valid range by parse.
    pub fn rank(&self) -> usize {
        self.dim[0] as usize
    }

    /// Spatial extents (nx, ny, nz); missing trailing dims read as 1.
    pub fn extents(&self) -> (usize, usize, usize) {
        let get = |i: usize| {
            if i <= self.rank() {
                self.dim[i] as usize
            } else {
                1
            }
        };
        (get(1), get(2), get(3))
    }

    /// Total voxel count over the first three dims.
    pub fn voxel_count(&self) -> usize {
        let (nx, ny, nz) = self.extents();
        nx * ny * nz
    }
}

// Field offsets in the 348-byte header.
mod offset {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const MAGIC: usize = 344;
}

/// Parse the fixed 348-byte header from the start of `bytes`.
///
/// Byte order is inferred by testing whether `sizeof_hdr` reads as 348
/// natively or byte-swapped; all numeric fields are then decoded under
/// the inferred order.
pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(VolumeError::TooShort(bytes.len()));
    }
    let le = LittleEndian::read_i32(&bytes[offset::SIZEOF_HDR..offset::SIZEOF_HDR + 4]);
    let be = BigEndian::read_i32(&bytes[offset::SIZEOF_HDR..offset::SIZEOF_HDR + 4]);
    let endianness = if le == HEADER_LEN as i32 {
        Endianness::Little
    } else if be == HEADER_LEN as i32 {
        Endianness::Big
    } else {
        return Err(VolumeError::BadSize(le));
    };
    match endianness {
        Endianness::Little => parse_with::<LittleEndian>(bytes, endianness),
        Endianness::Big => parse_with::<BigEndian>(bytes, endianness),
    }
}

fn parse_with<E: ByteOrder>(bytes: &[u8], endianness: Endianness) -> Result<NiftiHeader> {
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[offset::MAGIC..offset::MAGIC + 4]);
    if magic != MAGIC_SINGLE {
        // Dual-file headers are structurally valid but deliberately rejected.
        return Err(VolumeError::BadMagic(magic));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = E::read_i16(&bytes[offset::DIM + 2 * i..offset::DIM + 2 * i + 2]);
    }
    let rank = dim[0];
    if !(1..=7).contains(&rank) {
        return Err(VolumeError::BadDim(format!("dim[0] (rank) is {rank}")));
    }
    for (i, &extent) in dim.iter().enumerate().take(rank as usize + 1).skip(1) {
        if extent < 1 {
            return Err(VolumeError::BadDim(format!("dim[{i}] is {extent}")));
        }
    }

    let datatype_code = E::read_i16(&bytes[offset::DATATYPE..offset::DATATYPE + 2]);
    let datatype = DataType::from_code(datatype_code)?;
    let bitpix = E::read_i16(&bytes[offset::BITPIX..offset::BITPIX + 2]);
    if bitpix as usize != datatype.byte_size() * 8 {
        return Err(VolumeError::BitpixMismatch {
            datatype: datatype_code,
            bitpix,
        });
    }

    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = E::read_f32(&bytes[offset::PIXDIM + 4 * i..offset::PIXDIM + 4 * i + 4]);
    }

    let vox_offset = E::read_f32(&bytes[offset::VOX_OFFSET..offset::VOX_OFFSET + 4]);
    if vox_offset < HEADER_LEN as f32 {
        return Err(VolumeError::BadVoxOffset(vox_offset));
    }

    Ok(NiftiHeader {
        sizeof_hdr: HEADER_LEN as i32,
        dim,
        datatype,
        bitpix,
        pixdim,
        vox_offset,
        scl_slope: E::read_f32(&bytes[offset::SCL_SLOPE..offset::SCL_SLOPE + 4]),
        scl_inter: E::read_f32(&bytes[offset::SCL_INTER..offset::SCL_INTER + 4]),
        magic,
        endianness,
    })
}

/// A 3D intensity grid with voxel geometry, slope/intercept already applied.
///
/// Data is stored x-fastest (NIfTI order): `data[x + nx*(y + ny*z)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    data: Vec<f64>,
    extents: (usize, usize, usize),
    voxel_size_mm: (f32, f32, f32),
    source_id: String,
}

impl Volume {
    pub fn new(
        data: Vec<f64>,
        extents: (usize, usize, usize),
        voxel_size_mm: (f32, f32, f32),
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let (nx, ny, nz) = extents;
        let expected = nx * ny * nz;
        if data.len() != expected {
            return Err(VolumeError::DataLength {
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(i));
        }
        Ok(Self {
            data,
            extents,
            voxel_size_mm,
            source_id: source_id.into(),
        })
    }

    pub fn extents(&self) -> (usize, usize, usize) {
        self.extents
    }

    pub fn voxel_size_mm(&self) -> (f32, f32, f32) {
        self.voxel_size_mm
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn voxel(&self, x: usize, y: usize, z: usize) -> f64 {
        let (nx, ny, _) = self.extents;
        self.data[x + nx * (y + ny * z)]
    }
}

/// One 2D plane pulled out of a volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pixels: Vec<f64>,
    height: usize,
    width: usize,
    index: usize,
    scan_id: String,
}

impl Slice {
    pub fn new(
        pixels: Vec<f64>,
        height: usize,
        width: usize,
        index: usize,
        scan_id: impl Into<String>,
    ) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(VolumeError::DataLength {
                expected: height * width,
                got: pixels.len(),
            });
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(i));
        }
        Ok(Self {
            pixels,
            height,
            width,
            index,
            scan_id: scan_id.into(),
        })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn scan_id(&self) -> &str {
        &self.scan_id
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

/// Extraction axis for slicing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Self::X),
            "y" => Ok(Self::Y),
            "z" => Ok(Self::Z),
            other => Err(format!("unknown axis '{other}' (expected x, y, or z)")),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::X => write!(f, "x"),
            Self::Y => write!(f, "y"),
            Self::Z => write!(f, "z"),
        }
    }
}

/// Serialize a volume as a single-file NIfTI-1 byte stream.
///
/// Always little-endian with `vox_offset` = 352, `scl_slope` = 1 and
/// `scl_inter` = 0; integer datatypes round to nearest and saturate at
/// the type bounds.
pub fn write_volume(volume: &Volume, datatype: DataType) -> Vec<u8> {
    let (nx, ny, nz) = volume.extents();
    let (dx, dy, dz) = volume.voxel_size_mm();
    let n = volume.data().len();
    let mut buf = vec![0u8; DEFAULT_VOX_OFFSET + n * datatype.byte_size()];

    LittleEndian::write_i32(&mut buf[offset::SIZEOF_HDR..], HEADER_LEN as i32);
    let dim: [i16; 8] = [3, nx as i16, ny as i16, nz as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut buf[offset::DIM + 2 * i..], *d);
    }
    LittleEndian::write_i16(&mut buf[offset::DATATYPE..], datatype.code());
    LittleEndian::write_i16(&mut buf[offset::BITPIX..], (datatype.byte_size() * 8) as i16);
    let pixdim: [f32; 8] = [1.0, dx, dy, dz, 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut buf[offset::PIXDIM + 4 * i..], *p);
    }
    LittleEndian::write_f32(&mut buf[offset::VOX_OFFSET..], DEFAULT_VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut buf[offset::SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut buf[offset::SCL_INTER..], 0.0);
    buf[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(&MAGIC_SINGLE);

    let payload = &mut buf[DEFAULT_VOX_OFFSET..];
    for (i, &v) in volume.data().iter().enumerate() {
        let at = i * datatype.byte_size();
        match datatype {
            DataType::Uint8 => payload[at] = v.round().clamp(0.0, 255.0) as u8,
            DataType::Int16 => LittleEndian::write_i16(&mut payload[at..], v.round() as i16),
            DataType::Int32 => LittleEndian::write_i32(&mut payload[at..], v.round() as i32),
            DataType::Float32 => LittleEndian::write_f32(&mut payload[at..], v as f32),
            DataType::Float64 => LittleEndian::write_f64(&mut payload[at..], v),
        }
    }
    buf
}

/// Decode a full single-file NIfTI-1 stream into a [`Volume`].
///
/// Payload values are scaled by `scl_slope`/`scl_inter` unless the slope
/// is 0, which by NIfTI-1 convention means "no scaling". A 4th dim of
/// extent 1 is squeezed; larger time extents are an error.
pub fn load_volume_bytes(bytes: &[u8], source_id: impl Into<String>) -> Result<Volume> {
    let header = parse_header(bytes)?;
    let rank = header.rank();
    for i in 4..=rank {
        if header.dim[i] != 1 {
            return Err(VolumeError::Unsupported4D(header.dim[i] as usize));
        }
    }
    let (nx, ny, nz) = header.extents();
    let n = header.voxel_count();
    let elem = header.datatype.byte_size();
    let start = header.vox_offset as usize;
    let expected = n * elem;
    let got = bytes.len().saturating_sub(start);
    if got < expected {
        return Err(VolumeError::TruncatedData { expected, got });
    }
    let payload = &bytes[start..start + expected];

    let raw = |at: usize| -> f64 {
        let b = &payload[at * elem..(at + 1) * elem];
        match (header.datatype, header.endianness) {
            (DataType::Uint8, _) => b[0] as f64,
            (DataType::Int16, Endianness::Little) => LittleEndian::read_i16(b) as f64,
            (DataType::Int16, Endianness::Big) => BigEndian::read_i16(b) as f64,
            (DataType::Int32, Endianness::Little) => LittleEndian::read_i32(b) as f64,
            (DataType::Int32, Endianness::Big) => BigEndian::read_i32(b) as f64,
            (DataType::Float32, Endianness::Little) => LittleEndian::read_f32(b) as f64,
            (DataType::Float32, Endianness::Big) => BigEndian::read_f32(b) as f64,
            (DataType::Float64, Endianness::Little) => LittleEndian::read_f64(b),
            (DataType::Float64, Endianness::Big) => BigEndian::read_f64(b),
        }
    };

    let scale = header.scl_slope != 0.0;
    let slope = header.scl_slope as f64;
    let inter = header.scl_inter as f64;
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let v = raw(i);
        data.push(if scale { slope * v + inter } else { v });
    }
    Volume::new(
        data,
        (nx, ny, nz),
        (header.pixdim[1], header.pixdim[2], header.pixdim[3]),
        source_id,
    )
}

/// Read a file's raw stream, transparently gunzipping when the
/// 0x1f 0x8b prefix is present (the extension is not consulted).
pub fn read_stream(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut decoded = Vec::new();
        flate2::read::GzDecoder::new(&bytes[..]).read_to_end(&mut decoded)?;
        Ok(decoded)
    } else {
        Ok(bytes)
    }
}

/// Read a `.nii` or gzip-wrapped `.nii.gz` file from disk.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = read_stream(path)?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().trim_end_matches(".nii").to_string())
        .unwrap_or_else(|| "volume".to_string());
    load_volume_bytes(&bytes, source_id)
}

/// Pull out every plane orthogonal to `axis`, in ascending index order.
///
/// Slice (height, width) are the remaining two extents in
/// (second-remaining, first-remaining) order; pixels are copied.
pub fn extract_slices(volume: &Volume, axis: Axis) -> Vec<Slice> {
    let (nx, ny, nz) = volume.extents();
    let (count, height, width) = match axis {
        Axis::X => (nx, nz, ny),
        Axis::Y => (ny, nz, nx),
        Axis::Z => (nz, ny, nx),
    };
    (0..count)
        .map(|k| {
            let mut pixels = Vec::with_capacity(height * width);
            for i in 0..height {
                for j in 0..width {
                    let v = match axis {
                        Axis::X => volume.voxel(k, j, i),
                        Axis::Y => volume.voxel(j, k, i),
                        Axis::Z => volume.voxel(j, i, k),
                    };
                    pixels.push(v);
                }
            }
            Slice {
                pixels,
                height,
                width,
                index: k,
                scan_id: volume.source_id().to_string(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAGIC_DUAL: [u8; 4] = *b"ni1\0";

    fn test_volume(nx: usize, ny: usize, nz: usize) -> Volume {
        let data = (0..nx * ny * nz).map(|i| i as f64).collect();
        Volume::new(data, (nx, ny, nz), (1.0, 1.0, 1.25), "fixture").unwrap()
    }

    /// Swap every multi-byte field of a little-endian NIfTI-1 stream,
    /// yielding the big-endian encoding of the same header and payload.
    fn byte_swap_stream(bytes: &[u8], elem_size: usize, vox_offset: usize) -> Vec<u8> {
        let mut out = bytes.to_vec();
        let swap = |out: &mut [u8], at: usize, width: usize| {
            out[at..at + width].reverse();
        };
        // 4-byte fields: sizeof_hdr, extents, intent_p1..3, pixdim[8],
        // vox_offset, scl_slope, scl_inter, cal_max, cal_min,
        // slice_duration, toffset, glmax, glmin, quatern/qoffset/srow block.
        for at in [32, 56, 60, 64, 124, 128, 132, 136, 140, 144] {
            swap(&mut out, at, 4);
        }
        swap(&mut out, 0, 4);
        for i in 0..8 {
            swap(&mut out, offset::PIXDIM + 4 * i, 4);
        }
        for at in [offset::VOX_OFFSET, offset::SCL_SLOPE, offset::SCL_INTER] {
            swap(&mut out, at, 4);
        }
        for i in 0..18 {
            swap(&mut out, 256 + 4 * i, 4);
        }
        // 2-byte fields: session_error, dim[8], intent_code, datatype,
        // bitpix, slice_start, slice_end, qform_code, sform_code.
        for at in [36usize, 68, 70, 72, 74, 120, 252, 254] {
            swap(&mut out, at, 2);
        }
        for i in 0..8 {
            swap(&mut out, offset::DIM + 2 * i, 2);
        }
        if elem_size > 1 {
            let mut at = vox_offset;
            while at + elem_size <= out.len() {
                out[at..at + elem_size].reverse();
                at += elem_size;
            }
        }
        out
    }

    #[test]
    fn write_then_parse_recovers_header() {
        let v = test_volume(4, 4, 3);
        let bytes = write_volume(&v, DataType::Float32);
        let h = parse_header(&bytes).unwrap();
        assert_eq!(h.sizeof_hdr, 348);
        assert_eq!(h.dim, [3, 4, 4, 3, 1, 1, 1, 1]);
        assert_eq!(h.datatype, DataType::Float32);
        assert_eq!(h.bitpix, 32);
        assert_eq!(h.vox_offset, 352.0);
        assert_eq!(h.scl_slope, 1.0);
        assert_eq!(h.scl_inter, 0.0);
        assert_eq!(h.magic, *b"n+1\0");
        assert_eq!(h.endianness, Endianness::Little);
    }

    #[test]
    fn byte_swapped_stream_parses_as_big_endian() {
        let v = test_volume(4, 4, 3);
        let bytes = write_volume(&v, DataType::Float32);
        let native = parse_header(&bytes).unwrap();
        let swapped = byte_swap_stream(&bytes, 4, DEFAULT_VOX_OFFSET);
        let h = parse_header(&swapped).unwrap();
        assert_eq!(h.endianness, Endianness::Big);
        assert_eq!(h.dim, native.dim);
        assert_eq!(h.datatype, native.datatype);
        assert_eq!(h.bitpix, native.bitpix);
        assert_eq!(h.pixdim, native.pixdim);
        assert_eq!(h.vox_offset, native.vox_offset);
        assert_eq!(h.scl_slope, native.scl_slope);
        assert_eq!(h.scl_inter, native.scl_inter);
        // And the full stream round-trips to the same voxels.
        let v2 = load_volume_bytes(&swapped, "fixture").unwrap();
        assert_eq!(v2, v);
    }

    #[test]
    fn all_zero_header_is_bad_size() {
        let bytes = vec![0u8; HEADER_LEN];
        assert!(matches!(
            parse_header(&bytes),
            Err(VolumeError::BadSize(0))
        ));
    }

    #[test]
    fn short_input_is_too_short() {
        assert!(matches!(
            parse_header(&[0u8; 100]),
            Err(VolumeError::TooShort(100))
        ));
    }

    #[test]
    fn dual_file_magic_is_rejected() {
        let v = test_volume(4, 4, 3);
        let mut bytes = write_volume(&v, DataType::Float32);
        bytes[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(&MAGIC_DUAL);
        assert!(matches!(
            parse_header(&bytes),
            Err(VolumeError::BadMagic(m)) if m == MAGIC_DUAL
        ));
    }

    #[test]
    fn unknown_datatype_code_is_rejected() {
        let v = test_volume(4, 4, 3);
        let mut bytes = write_volume(&v, DataType::Float32);
        LittleEndian::write_i16(&mut bytes[offset::DATATYPE..], 512);
        assert!(matches!(
            parse_header(&bytes),
            Err(VolumeError::UnsupportedDatatype(512))
        ));
    }

    #[test]
    fn written_stream_has_expected_size() {
        let v = Volume::new(vec![0.0; 48], (4, 4, 3), (1.0, 1.0, 1.0), "zeros").unwrap();
        let bytes = write_volume(&v, DataType::Float32);
        assert_eq!(bytes.len(), 352 + 4 * 4 * 3 * 4);
    }

    #[test]
    fn volume_with_nan_is_rejected() {
        let mut data = vec![0.0; 48];
        data[7] = f64::NAN;
        assert!(matches!(
            Volume::new(data, (4, 4, 3), (1.0, 1.0, 1.0), "bad"),
            Err(VolumeError::NonFinite(7))
        ));
    }

    #[test]
    fn slope_and_intercept_are_applied() {
        let v = Volume::new(vec![3.0; 8], (2, 2, 2), (1.0, 1.0, 1.0), "s").unwrap();
        let mut bytes = write_volume(&v, DataType::Int16);
        LittleEndian::write_f32(&mut bytes[offset::SCL_SLOPE..], 2.0);
        LittleEndian::write_f32(&mut bytes[offset::SCL_INTER..], 1.0);
        let loaded = load_volume_bytes(&bytes, "s").unwrap();
        assert!(loaded.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn zero_slope_means_no_scaling() {
        let v = Volume::new(vec![3.0; 8], (2, 2, 2), (1.0, 1.0, 1.0), "s").unwrap();
        let mut bytes = write_volume(&v, DataType::Int16);
        LittleEndian::write_f32(&mut bytes[offset::SCL_SLOPE..], 0.0);
        LittleEndian::write_f32(&mut bytes[offset::SCL_INTER..], 99.0);
        let loaded = load_volume_bytes(&bytes, "s").unwrap();
        assert!(loaded.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn truncated_payload_is_detected() {
        let v = test_volume(4, 4, 3);
        let mut bytes = write_volume(&v, DataType::Float32);
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(
            load_volume_bytes(&bytes, "t"),
            Err(VolumeError::TruncatedData { .. })
        ));
    }

    #[test]
    fn singleton_time_dim_is_squeezed() {
        let v = test_volume(4, 4, 3);
        let mut bytes = write_volume(&v, DataType::Float64);
        LittleEndian::write_i16(&mut bytes[offset::DIM..], 4);
        LittleEndian::write_i16(&mut bytes[offset::DIM + 8..], 1);
        let loaded = load_volume_bytes(&bytes, "fixture").unwrap();
        assert_eq!(loaded.extents(), (4, 4, 3));
        assert_eq!(loaded, v);
    }

    #[test]
    fn larger_time_dim_is_an_error() {
        let v = test_volume(4, 4, 3);
        let mut bytes = write_volume(&v, DataType::Float32);
        LittleEndian::write_i16(&mut bytes[offset::DIM..], 4);
        LittleEndian::write_i16(&mut bytes[offset::DIM + 8..], 2);
        assert!(matches!(
            load_volume_bytes(&bytes, "fixture"),
            Err(VolumeError::Unsupported4D(2))
        ));
    }

    #[test]
    fn gzip_input_is_detected_by_prefix() {
        use std::io::Write;
        let v = test_volume(4, 4, 3);
        let bytes = write_volume(&v, DataType::Float32);
        let dir = tempfile::tempdir().unwrap();
        // Extension does not matter; the 0x1f 0x8b prefix does.
        let path = dir.path().join("fixture.nii");
        let mut enc =
            flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&bytes).unwrap();
        std::fs::write(&path, enc.finish().unwrap()).unwrap();
        let loaded = load_volume(&path).unwrap();
        assert_eq!(loaded.extents(), (4, 4, 3));
        assert_eq!(loaded.data(), v.data());
    }

    #[test]
    fn z_slices_have_expected_shape_and_values() {
        let v = test_volume(4, 4, 3);
        let slices = extract_slices(&v, Axis::Z);
        assert_eq!(slices.len(), 3);
        for (k, s) in slices.iter().enumerate() {
            assert_eq!((s.height(), s.width()), (4, 4));
            assert_eq!(s.index(), k);
            assert_eq!(s.scan_id(), "fixture");
        }
    }

    #[test]
    fn constant_plane_yields_constant_slice() {
        let (nx, ny, nz) = (4, 4, 3);
        let mut data = vec![0.0; nx * ny * nz];
        for y in 0..ny {
            for x in 0..nx {
                data[x + nx * (y + ny)] = 5.0; // z = 1 plane
            }
        }
        let v = Volume::new(data, (nx, ny, nz), (1.0, 1.0, 1.0), "c").unwrap();
        let slices = extract_slices(&v, Axis::Z);
        assert!(slices[1].pixels().iter().all(|&p| p == 5.0));
        assert!(slices[0].pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn slice_pixels_match_direct_voxel_indexing() {
        use rand::{Rng, SeedableRng};
        let v = test_volume(5, 7, 6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let slices = extract_slices(&v, axis);
            for _ in 0..50 {
                let k = rng.gen_range(0..slices.len());
                let s = &slices[k];
                let i = rng.gen_range(0..s.height());
                let j = rng.gen_range(0..s.width());
                let expected = match axis {
                    Axis::X => v.voxel(k, j, i),
                    Axis::Y => v.voxel(j, k, i),
                    Axis::Z => v.voxel(j, i, k),
                };
                assert_eq!(s.pixel(i, j), expected);
            }
        }
    }

    #[test]
    fn slices_partition_the_volume() {
        let v = test_volume(3, 4, 5);
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let slices = extract_slices(&v, axis);
            let mut seen = vec![0u32; v.data().len()];
            let (nx, ny, _) = v.extents();
            for (k, s) in slices.iter().enumerate() {
                for i in 0..s.height() {
                    for j in 0..s.width() {
                        let (x, y, z) = match axis {
                            Axis::X => (k, j, i),
                            Axis::Y => (j, k, i),
                            Axis::Z => (j, i, k),
                        };
                        assert_eq!(s.pixel(i, j), v.voxel(x, y, z));
                        seen[x + nx * (y + ny * z)] += 1;
                    }
                }
            }
            assert!(seen.iter().all(|&n| n == 1));
        }
    }
}
