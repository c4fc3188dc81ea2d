//! Write a volume in each supported datatype, read it back, and binarize.

use vlsm::prelude::*;

fn main() -> vlsm::Result<()> {
    let dir = std::env::temp_dir().join("vlsm-nifti-example");
    std::fs::create_dir_all(&dir).map_err(|e| vlsm::Error::InvalidArgument(e.to_string()))?;
    let grid = Grid::new([10, 12, 8], [2.0, 2.0, 2.0])?;
    let values: Vec<f64> = (0..grid.n_voxels()).map(|v| (v % 7) as f64).collect();
    let volume = Volume3D::new(grid, values, DataType::Int16)?;

    for (datatype, name) in [(DataType::UInt8, "u8.nii"), (DataType::Int16, "i16.nii.gz"), (DataType::Float32, "f32.nii")] {
        let path = dir.join(name);
        write_nifti(&volume, &path, datatype)?;
        let back = read_nifti(&path)?;
        println!(
            "{name:12} datatype={:8} dims={:?} identical={}",
            back.datatype.name(),
            back.dims(),
            back.values == volume.values
        );
    }

    let lesion = binarize(&volume, 3.0);
    let n = lesion.values.iter().filter(|&&x| x == 1.0).count();
    println!("binarized at > 3: {n} of {} voxels set", grid.n_voxels());
    Ok(())
}
