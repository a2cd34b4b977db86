use super::sparse::VectorWiseMatrix;
use crate::error::{Error, Result};

/// A dense `V x width` tile formed by stitching stored vectors of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchedTile {
    pub group: usize,
    /// Original column of each real tile column, in ascending order.
    pub columns: Vec<usize>,
    /// Zero columns appended after `columns` to reach the tile width.
    pub padding: usize,
    /// Row-major `V x width` values.
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchedMatrix {
    pub v: usize,
    pub width: usize,
    pub tiles: Vec<StitchedTile>,
}

impl StitchedMatrix {
    pub fn padded_columns(&self) -> usize {
        self.tiles.iter().map(|t| t.padding).sum()
    }
}

/// Packs each group's stored columns into dense tiles of `width` columns.
/// The last tile of a ragged group is zero-padded; empty groups yield none.
pub fn stitch_to_blockwise(vw: &VectorWiseMatrix, width: usize) -> Result<StitchedMatrix> {
    if width == 0 {
        return Err(Error::params("tile width must be at least 1"));
    }
    let v = vw.vector_size();
    let mut tiles = Vec::new();
    for (g, group) in vw.groups().iter().enumerate() {
        for start in (0..group.len()).step_by(width) {
            let end = (start + width).min(group.len());
            let mut values = vec![0.0f32; v * width];
            for t in start..end {
                for (r, &x) in group.vector(v, t).iter().enumerate() {
                    values[r * width + (t - start)] = x;
                }
            }
            tiles.push(StitchedTile {
                group: g,
                columns: group.columns[start..end].to_vec(),
                padding: width - (end - start),
                values,
            });
        }
    }
    Ok(StitchedMatrix { v, width, tiles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::sparse::VectorGroup;

    fn one_group(columns: Vec<usize>, cols: usize) -> VectorWiseMatrix {
        let values = (0..columns.len() * 2).map(|i| i as f32 + 1.0).collect();
        VectorWiseMatrix::new(2, cols, 2, vec![VectorGroup { columns, values }]).unwrap()
    }

    #[test]
    fn two_columns_make_one_square_tile() {
        let vw = one_group(vec![1, 3], 4);
        let s = stitch_to_blockwise(&vw, 2).unwrap();
        assert_eq!(s.tiles.len(), 1);
        assert_eq!(s.tiles[0].columns, vec![1, 3]);
        assert_eq!(s.tiles[0].padding, 0);
        // vectors [1,2] and [3,4] become the tile's columns
        assert_eq!(s.tiles[0].values, vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn ragged_group_is_padded() {
        let vw = one_group(vec![0, 2, 3], 4);
        let s = stitch_to_blockwise(&vw, 2).unwrap();
        assert_eq!(s.tiles.len(), 2);
        assert_eq!(s.tiles[1].columns, vec![3]);
        assert_eq!(s.tiles[1].padding, 1);
        assert_eq!(s.tiles[1].values, vec![5.0, 0.0, 6.0, 0.0]);
        assert_eq!(s.padded_columns(), 1);
    }

    #[test]
    fn empty_group_has_no_tiles() {
        let vw = one_group(vec![], 4);
        assert!(stitch_to_blockwise(&vw, 2).unwrap().tiles.is_empty());
        assert!(stitch_to_blockwise(&vw, 0).is_err());
    }
}
