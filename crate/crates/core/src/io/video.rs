use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::pgm::{decode_pgm, encode_pgm, GrayImage};
use crate::error::{invalid, Result, RpcaError};
use crate::matrix::DenseMatrix;
use crate::solver::{SolveResult, SolverConfig, SolverKind};

/// Frame geometry of a video stored as a matrix: one vectorized frame per
/// column, pixels in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VideoMatrixMeta {
    pub frame_height: usize,
    pub frame_width: usize,
    pub frame_count: usize,
}

impl VideoMatrixMeta {
    pub fn pixels_per_frame(&self) -> usize {
        self.frame_height * self.frame_width
    }
}

/// Stacks equally sized frames as the columns of a matrix.
pub fn frames_to_matrix(frames: &[GrayImage]) -> Result<(DenseMatrix, VideoMatrixMeta)> {
    let Some(first) = frames.first() else {
        return invalid("no frames");
    };
    let (h, w) = (first.height, first.width);
    if let Some(k) = frames.iter().position(|f| (f.height, f.width) != (h, w)) {
        return invalid(format!(
            "frame {k} is {}x{}, expected {w}x{h}",
            frames[k].width, frames[k].height
        ));
    }
    let m = DMatrix::from_fn(h * w, frames.len(), |p, j| f64::from(frames[j].pixels[p]));
    let meta = VideoMatrixMeta {
        frame_height: h,
        frame_width: w,
        frame_count: frames.len(),
    };
    Ok((DenseMatrix::from_dmatrix(m)?, meta))
}

/// `.pgm` files in `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| RpcaError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| RpcaError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Reads every `.pgm` frame of `dir` in lexicographic order into a
/// `(height·width) × frames` matrix with values in `[0, 255]`.
pub fn video_to_matrix(dir: &Path) -> Result<(DenseMatrix, VideoMatrixMeta)> {
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        return Err(RpcaError::format(
            dir.display().to_string(),
            None,
            "no .pgm frames found",
        ));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let bytes = std::fs::read(path).map_err(|e| RpcaError::io(path, e))?;
        let img = decode_pgm(&bytes, &path.display().to_string())?;
        if let Some(first) = frames.first() {
            let first: &GrayImage = first;
            if (img.width, img.height) != (first.width, first.height) {
                return Err(RpcaError::format(
                    path.display().to_string(),
                    None,
                    format!(
                        "frame is {}x{}, expected {}x{} like {}",
                        img.width,
                        img.height,
                        first.width,
                        first.height,
                        paths[0].display()
                    ),
                ));
            }
        }
        frames.push(img);
    }
    frames_to_matrix(&frames)
}

/// Clamps to `[0, 255]` and rounds half to even.
pub fn to_pixel(x: f64) -> u8 {
    x.clamp(0.0, 255.0).round_ties_even() as u8
}

/// Splits matrix columns back into frames.
pub fn matrix_to_images(m: &DenseMatrix, meta: &VideoMatrixMeta) -> Result<Vec<GrayImage>> {
    if meta.frame_height == 0 || meta.frame_width == 0 {
        return invalid("frame dimensions must be positive");
    }
    if m.rows() != meta.pixels_per_frame() || m.cols() != meta.frame_count {
        return invalid(format!(
            "matrix is {}x{}, expected {}x{} for {} frames of {}x{}",
            m.rows(),
            m.cols(),
            meta.pixels_per_frame(),
            meta.frame_count,
            meta.frame_count,
            meta.frame_width,
            meta.frame_height
        ));
    }
    let a = m.as_dmatrix();
    (0..m.cols())
        .map(|j| {
            GrayImage::new(
                meta.frame_width,
                meta.frame_height,
                a.column(j).iter().map(|&x| to_pixel(x)).collect(),
            )
        })
        .collect()
}

/// Writes one P5 PGM per column to `out_dir` (created if missing) as
/// `frame_000000.pgm`, `frame_000001.pgm`, ...
pub fn matrix_to_frames(m: &DenseMatrix, meta: &VideoMatrixMeta, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let images = matrix_to_images(m, meta)?;
    std::fs::create_dir_all(out_dir).map_err(|e| RpcaError::io(out_dir, e))?;
    let width = images.len().saturating_sub(1).to_string().len().max(6);
    let mut paths = Vec::with_capacity(images.len());
    for (j, img) in images.iter().enumerate() {
        let path = out_dir.join(format!("frame_{j:0width$}.pgm"));
        std::fs::write(&path, encode_pgm(img)).map_err(|e| RpcaError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Background/foreground split of a video matrix.
#[derive(Clone, Debug)]
pub struct VideoSeparation {
    /// Dense low-rank estimate `L̂`.
    pub background: DenseMatrix,
    /// Residual `D − L̂`.
    pub foreground: DenseMatrix,
    pub result: SolveResult,
}

impl VideoSeparation {
    /// `|D − L̂|`, the form written out as foreground frames.
    pub fn foreground_magnitude(&self) -> DenseMatrix {
        DenseMatrix::wrap(self.foreground.as_dmatrix().abs())
    }
}

/// Runs `solver` on a video matrix. No preprocessing (mean removal or
/// scaling) is applied.
pub fn separate_background(d: &DenseMatrix, solver: SolverKind, cfg: &SolverConfig) -> Result<VideoSeparation> {
    let result = solver.solve(d, cfg)?;
    let background = result.low_rank.to_dense();
    let foreground = DenseMatrix::wrap(d.as_dmatrix() - background.as_dmatrix());
    Ok(VideoSeparation {
        background,
        foreground,
        result,
    })
}
