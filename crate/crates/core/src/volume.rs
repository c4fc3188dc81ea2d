//! 3D volumes and single-file NIfTI-1 I/O.
//!
//! Only the subset needed for lesion maps, masks and statistic maps is
//! supported: `.nii` / `.nii.gz`, datatypes uint8, int16 and float32. The
//! reader accepts either byte order; the writer always emits little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

/// On-disk voxel datatype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    /// Unsigned 8-bit; used for binary masks and lesion maps.
    UInt8,
    Int16,
    Float32,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::UInt8 => 2,
            DataType::Int16 => 4,
            DataType::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(DataType::UInt8),
            4 => Ok(DataType::Int16),
            16 => Ok(DataType::Float32),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn bytes_per_voxel(self) -> usize {
        match self {
            DataType::UInt8 => 1,
            DataType::Int16 => 2,
            DataType::Float32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::UInt8 => "uint8",
            DataType::Int16 => "int16",
            DataType::Float32 => "float32",
        }
    }

    fn can_represent(self, v: f64) -> bool {
        match self {
            DataType::UInt8 => v.fract() == 0.0 && (0.0..=255.0).contains(&v),
            DataType::Int16 => v.fract() == 0.0 && (i16::MIN as f64..=i16::MAX as f64).contains(&v),
            DataType::Float32 => v.is_finite() && v.abs() <= f32::MAX as f64,
        }
    }
}

/// Voxel grid shared by every volume of a cohort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
}

/// Integer voxel position on a [`Grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoxelCoord {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl Grid {
    pub fn new(dims: [usize; 3], voxel_size: [f64; 3]) -> Result<Self> {
        let grid = Grid { dims, voxel_size };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid with 1 mm isotropic voxels.
    pub fn cubic(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        Grid::new([nx, ny, nz], [1.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidVolume(format!("dims must be positive, got {:?}", self.dims)));
        }
        if self.voxel_size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidVolume(format!(
                "voxel sizes must be positive, got {:?}",
                self.voxel_size
            )));
        }
        Ok(())
    }

    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn linear(&self, c: VoxelCoord) -> usize {
        c.i + self.dims[0] * (c.j + self.dims[1] * c.k)
    }

    #[inline]
    pub fn coord(&self, linear: usize) -> VoxelCoord {
        let nx = self.dims[0];
        let ny = self.dims[1];
        VoxelCoord {
            i: linear % nx,
            j: (linear / nx) % ny,
            k: linear / (nx * ny),
        }
    }

    pub fn contains(&self, c: VoxelCoord) -> bool {
        c.i < self.dims[0] && c.j < self.dims[1] && c.k < self.dims[2]
    }

    /// Same dims and voxel sizes.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.dims == other.dims && self.voxel_size == other.voxel_size
    }

    /// Scaling-only affine (voxel index to mm) for this grid.
    pub fn default_affine(&self) -> [[f64; 4]; 3] {
        [
            [self.voxel_size[0], 0.0, 0.0, 0.0],
            [0.0, self.voxel_size[1], 0.0, 0.0],
            [0.0, 0.0, self.voxel_size[2], 0.0],
        ]
    }
}

/// Scalar volume in x-fastest linear order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub datatype: DataType,
    /// Voxel-to-world rows (sform). Carried through I/O; analysis ignores it.
    pub affine: [[f64; 4]; 3],
}

impl Volume3D {
    pub fn new(grid: Grid, values: Vec<f64>, datatype: DataType) -> Result<Self> {
        let v = Volume3D {
            affine: grid.default_affine(),
            grid,
            values,
            datatype,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn zeros(grid: Grid, datatype: DataType) -> Result<Self> {
        Volume3D::new(grid, vec![0.0; grid.n_voxels()], datatype)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.values.len() != self.grid.n_voxels() {
            return Err(Error::InvalidVolume(format!(
                "expected {} values for dims {:?}, got {}",
                self.grid.n_voxels(),
                self.grid.dims,
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn get(&self, c: VoxelCoord) -> f64 {
        self.values[self.grid.linear(c)]
    }
}

/// 1 where `value > threshold`, else 0.
pub fn binarize(volume: &Volume3D, threshold: f64) -> Volume3D {
    Volume3D {
        grid: volume.grid,
        values: volume
            .values
            .iter()
            .map(|&v| if v > threshold { 1.0 } else { 0.0 })
            .collect(),
        datatype: DataType::UInt8,
        affine: volume.affine,
    }
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl HeaderReader<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.bytes[off..off + 4].try_into().unwrap();
        match self.endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        }
    }
}

fn read_file_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads a single-file NIfTI-1 volume (optionally gzip-compressed).
pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume3D> {
    let bytes = read_file_bytes(path.as_ref())?;
    parse_nifti(&bytes)
}

/// Parses an in-memory (already decompressed) NIfTI-1 image.
pub fn parse_nifti(bytes: &[u8]) -> Result<Volume3D> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::MalformedHeader(format!(
            "file has {} bytes, header needs {HEADER_SIZE}",
            bytes.len()
        )));
    }
    let size_le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let size_be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let endian = if size_le == HEADER_SIZE as i32 {
        Endian::Little
    } else if size_be == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(Error::MalformedHeader(format!("sizeof_hdr is {size_le}, expected 348")));
    };
    if &bytes[344..348] != MAGIC {
        return Err(Error::MalformedHeader(format!(
            "magic is {:?}, expected \"n+1\\0\"",
            String::from_utf8_lossy(&bytes[344..348])
        )));
    }
    let h = HeaderReader { bytes, endian };

    let ndim = h.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::MalformedHeader(format!("dim[0] = {ndim} out of range")));
    }
    let mut dims = [1usize; 3];
    for d in 0..ndim as usize {
        let n = h.i16(42 + 2 * d);
        if n < 1 {
            return Err(Error::MalformedHeader(format!("dim[{}] = {n}", d + 1)));
        }
        if d < 3 {
            dims[d] = n as usize;
        } else if n != 1 {
            return Err(Error::MalformedHeader(format!(
                "only 3D volumes are supported, dim[{}] = {n}",
                d + 1
            )));
        }
    }
    let datatype = DataType::from_code(h.i16(70))?;
    let mut voxel_size = [1.0; 3];
    for (d, vs) in voxel_size.iter_mut().enumerate() {
        let p = h.f32(80 + 4 * d).abs() as f64;
        if p > 0.0 {
            *vs = p;
        }
    }
    let grid = Grid::new(dims, voxel_size)?;

    let vox_offset = h.f32(108);
    if !(vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::MalformedHeader(format!("vox_offset {vox_offset} < 348")));
    }
    let offset = vox_offset as usize;
    let n = grid.n_voxels();
    let needed = offset + n * datatype.bytes_per_voxel();
    if bytes.len() < needed {
        return Err(Error::TruncatedData {
            expected: needed,
            found: bytes.len(),
        });
    }
    let data = &bytes[offset..needed];
    let mut values: Vec<f64> = match datatype {
        DataType::UInt8 => data.iter().map(|&b| b as f64).collect(),
        DataType::Int16 => data
            .chunks_exact(2)
            .map(|c| {
                let b = [c[0], c[1]];
                match endian {
                    Endian::Little => i16::from_le_bytes(b),
                    Endian::Big => i16::from_be_bytes(b),
                }
                .into()
            })
            .collect(),
        DataType::Float32 => data
            .chunks_exact(4)
            .map(|c| {
                let b: [u8; 4] = c.try_into().unwrap();
                match endian {
                    Endian::Little => f32::from_le_bytes(b),
                    Endian::Big => f32::from_be_bytes(b),
                }
                .into()
            })
            .collect(),
    };

    let mut datatype = datatype;
    let slope = h.f32(112) as f64;
    let inter = h.f32(116) as f64;
    if slope != 0.0 && !(slope == 1.0 && inter == 0.0) {
        for v in &mut values {
            *v = *v * slope + inter;
        }
        datatype = DataType::Float32;
    }

    let affine = if h.i16(254) > 0 {
        let mut a = [[0.0; 4]; 3];
        for (r, row) in a.iter_mut().enumerate() {
            for (c, x) in row.iter_mut().enumerate() {
                *x = h.f32(280 + 16 * r + 4 * c) as f64;
            }
        }
        a
    } else {
        grid.default_affine()
    };

    Ok(Volume3D {
        grid,
        values,
        datatype,
        affine,
    })
}

/// Serialises a volume into NIfTI-1 bytes (little-endian, uncompressed).
pub fn encode_nifti(volume: &Volume3D, datatype: DataType) -> Result<Vec<u8>> {
    volume.validate()?;
    for (index, &value) in volume.values.iter().enumerate() {
        if !datatype.can_represent(value) {
            return Err(Error::Unrepresentable {
                value,
                index,
                datatype: datatype.name(),
            });
        }
    }
    for &d in &volume.grid.dims {
        if d > i16::MAX as usize {
            return Err(Error::InvalidVolume(format!("dim {d} exceeds NIfTI-1 limit")));
        }
    }

    let n = volume.grid.n_voxels();
    let mut buf = vec![0u8; VOX_OFFSET + n * datatype.bytes_per_voxel()];
    let put_i16 = |buf: &mut [u8], off: usize, v: i16| buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |buf: &mut [u8], off: usize, v: f32| buf[off..off + 4].copy_from_slice(&v.to_le_bytes());

    buf[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    buf[38] = b'r';
    put_i16(&mut buf, 40, 3);
    for d in 0..3 {
        put_i16(&mut buf, 42 + 2 * d, volume.grid.dims[d] as i16);
    }
    for d in 3..7 {
        put_i16(&mut buf, 42 + 2 * d, 1);
    }
    put_i16(&mut buf, 70, datatype.code());
    put_i16(&mut buf, 72, (datatype.bytes_per_voxel() * 8) as i16);
    put_f32(&mut buf, 76, 1.0);
    for d in 0..3 {
        put_f32(&mut buf, 80 + 4 * d, volume.grid.voxel_size[d] as f32);
    }
    for d in 3..7 {
        put_f32(&mut buf, 80 + 4 * d, 1.0);
    }
    put_f32(&mut buf, 108, VOX_OFFSET as f32);
    put_f32(&mut buf, 112, 1.0);
    put_f32(&mut buf, 116, 0.0);
    // mm, seconds
    buf[123] = 2 | 8;
    put_i16(&mut buf, 252, 0);
    put_i16(&mut buf, 254, 1);
    for r in 0..3 {
        for c in 0..4 {
            put_f32(&mut buf, 280 + 16 * r + 4 * c, volume.affine[r][c] as f32);
        }
    }
    buf[344..348].copy_from_slice(MAGIC);

    let data = &mut buf[VOX_OFFSET..];
    match datatype {
        DataType::UInt8 => {
            for (dst, &v) in data.iter_mut().zip(&volume.values) {
                *dst = v as u8;
            }
        }
        DataType::Int16 => {
            for (dst, &v) in data.chunks_exact_mut(2).zip(&volume.values) {
                dst.copy_from_slice(&(v as i16).to_le_bytes());
            }
        }
        DataType::Float32 => {
            for (dst, &v) in data.chunks_exact_mut(4).zip(&volume.values) {
                dst.copy_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(buf)
}

/// Writes `volume` as NIfTI-1 with the given on-disk datatype. Paths ending
/// in `.gz` are gzip-compressed.
///
/// Float32 output rounds to single precision; values that are already
/// f32-representable round-trip exactly.
pub fn write_nifti(volume: &Volume3D, path: impl AsRef<Path>, datatype: DataType) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nifti(volume, datatype)?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let out = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nx: usize, ny: usize, nz: usize) -> Grid {
        Grid::cubic(nx, ny, nz).unwrap()
    }

    #[test]
    fn zero_uint8_volume_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.nii");
        let v = Volume3D::zeros(grid(2, 2, 2), DataType::UInt8).unwrap();
        write_nifti(&v, &p, DataType::UInt8).unwrap();
        let r = read_nifti(&p).unwrap();
        assert_eq!(r.values, vec![0.0; 8]);
        assert_eq!(r, v);
    }

    #[test]
    fn binary_file_size_is_header_plus_voxels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.nii");
        let mut v = Volume3D::zeros(grid(3, 4, 5), DataType::UInt8).unwrap();
        v.values[7] = 1.0;
        write_nifti(&v, &p, DataType::UInt8).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len() as usize, 352 + 3 * 4 * 5);
    }

    #[test]
    fn empty_dims_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume3D {
            grid: Grid {
                dims: [0, 2, 2],
                voxel_size: [1.0; 3],
            },
            values: vec![],
            datatype: DataType::UInt8,
            affine: [[0.0; 4]; 3],
        };
        assert!(write_nifti(&v, dir.path().join("e.nii"), DataType::UInt8).is_err());
    }

    #[test]
    fn negative_int16_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.nii.gz");
        let values = vec![-32768.0, -5.0, 0.0, 7.0, 32767.0, -1.0, 2.0, 3.0];
        let v = Volume3D::new(grid(2, 2, 2), values, DataType::Int16).unwrap();
        write_nifti(&v, &p, DataType::Int16).unwrap();
        assert_eq!(read_nifti(&p).unwrap(), v);
    }

    #[test]
    fn scl_slope_and_inter_are_applied() {
        let v = Volume3D::new(grid(2, 1, 1), vec![0.0, 1.0], DataType::Float32).unwrap();
        let mut bytes = encode_nifti(&v, DataType::Float32).unwrap();
        bytes[112..116].copy_from_slice(&2.0f32.to_le_bytes());
        bytes[116..120].copy_from_slice(&1.0f32.to_le_bytes());
        let r = parse_nifti(&bytes).unwrap();
        assert_eq!(r.values, vec![1.0, 3.0]);
    }

    #[test]
    fn big_endian_input_is_accepted() {
        // Hand-built big-endian header for a 2x1x1 int16 volume.
        let mut b = vec![0u8; 352 + 4];
        b[0..4].copy_from_slice(&348i32.to_be_bytes());
        b[40..42].copy_from_slice(&3i16.to_be_bytes());
        b[42..44].copy_from_slice(&2i16.to_be_bytes());
        b[44..46].copy_from_slice(&1i16.to_be_bytes());
        b[46..48].copy_from_slice(&1i16.to_be_bytes());
        b[70..72].copy_from_slice(&4i16.to_be_bytes());
        b[72..74].copy_from_slice(&16i16.to_be_bytes());
        for d in 0..3 {
            b[80 + 4 * d..84 + 4 * d].copy_from_slice(&2.0f32.to_be_bytes());
        }
        b[108..112].copy_from_slice(&352.0f32.to_be_bytes());
        b[344..348].copy_from_slice(MAGIC);
        b[352..354].copy_from_slice(&(-3i16).to_be_bytes());
        b[354..356].copy_from_slice(&300i16.to_be_bytes());
        let v = parse_nifti(&b).unwrap();
        assert_eq!(v.values, vec![-3.0, 300.0]);
        assert_eq!(v.grid.voxel_size, [2.0; 3]);
    }

    #[test]
    fn malformed_headers_are_rejected() {
        let v = Volume3D::zeros(grid(2, 2, 2), DataType::UInt8).unwrap();
        let good = encode_nifti(&v, DataType::UInt8).unwrap();

        let mut bad = good.clone();
        bad[0..4].copy_from_slice(&540i32.to_le_bytes());
        assert!(matches!(parse_nifti(&bad), Err(Error::MalformedHeader(_))));

        let mut bad = good.clone();
        bad[344..348].copy_from_slice(b"ni1\0");
        assert!(matches!(parse_nifti(&bad), Err(Error::MalformedHeader(_))));

        let mut bad = good.clone();
        bad[70..72].copy_from_slice(&64i16.to_le_bytes());
        assert!(matches!(parse_nifti(&bad), Err(Error::UnsupportedDatatype(64))));

        let bad = &good[..good.len() - 1];
        assert!(matches!(parse_nifti(bad), Err(Error::TruncatedData { .. })));
    }

    #[test]
    fn unrepresentable_values_are_rejected() {
        let v = Volume3D::new(grid(2, 1, 1), vec![0.5, 1.0], DataType::Float32).unwrap();
        assert!(matches!(
            encode_nifti(&v, DataType::UInt8),
            Err(Error::Unrepresentable { index: 0, .. })
        ));
        let v = Volume3D::new(grid(2, 1, 1), vec![1.0, 40000.0], DataType::Float32).unwrap();
        assert!(encode_nifti(&v, DataType::Int16).is_err());
        assert!(encode_nifti(&v, DataType::Float32).is_ok());
    }

    #[test]
    fn binarize_cases() {
        let v = Volume3D::new(grid(4, 1, 1), vec![0.0, 0.4, 0.6, 1.0], DataType::Float32).unwrap();
        assert_eq!(binarize(&v, 0.5).values, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(binarize(&v, -1.0).values, vec![1.0; 4]);
        assert_eq!(binarize(&v, 2.0).values, vec![0.0; 4]);
    }

    #[test]
    fn coord_linear_roundtrip() {
        let g = grid(3, 5, 7);
        for idx in 0..g.n_voxels() {
            assert_eq!(g.linear(g.coord(idx)), idx);
        }
    }
}
