use super::{world_to_pixel, Scene};
use crate::error::{Error, Result};

/// Binary occupancy image `X` (W×H×N_o, one-hot per occupied cell) and size
/// image `S` (W×H). Stored sparsely as the occupying type per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GridEncoding {
    pub width: usize,
    pub height: usize,
    pub n_types: usize,
    /// `cells[(i-1)·H + (j-1)]` is the type at 1-based cell (i, j).
    pub cells: Vec<Option<usize>>,
    /// Size image, same layout; 0 exactly at empty cells.
    pub sizes: Vec<f64>,
}

impl GridEncoding {
    fn offset(&self, i: usize, j: usize) -> usize {
        assert!((1..=self.width).contains(&i) && (1..=self.height).contains(&j));
        (i - 1) * self.height + (j - 1)
    }

    /// `X[i, j, l]` with 1-based cell indices.
    pub fn x(&self, i: usize, j: usize, l: usize) -> u8 {
        u8::from(self.cells[self.offset(i, j)] == Some(l))
    }

    /// `S[i, j]` with 1-based cell indices.
    pub fn s(&self, i: usize, j: usize) -> f64 {
        self.sizes[self.offset(i, j)]
    }

    /// Dense X in `[i][j][l]` order.
    pub fn dense_x(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.cells.len() * self.n_types];
        for (p, c) in self.cells.iter().enumerate() {
            if let Some(l) = c {
                out[p * self.n_types + l] = 1;
            }
        }
        out
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Same encoding with type channels renumbered by `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> GridEncoding {
        GridEncoding {
            cells: self.cells.iter().map(|c| c.map(|l| perm[l])).collect(),
            ..self.clone()
        }
    }
}

/// Rasterizes a scene: one set bit per object at its cell in its type
/// channel, and the object's size in `S` at that cell.
pub fn encode_grid(scene: &Scene, width: usize, height: usize) -> Result<GridEncoding> {
    scene.validate()?;
    let mut cells = vec![None; width * height];
    let mut sizes = vec![0.0; width * height];
    let mut owner = vec![usize::MAX; width * height];
    for (k, obj) in scene.objects.iter().enumerate() {
        let (i, j) = world_to_pixel(obj.position, width, height)?;
        let p = (i - 1) * height + (j - 1);
        if owner[p] != usize::MAX {
            return Err(Error::Collision {
                first: owner[p],
                second: k,
                i,
                j,
            });
        }
        owner[p] = k;
        cells[p] = Some(obj.type_id);
        sizes[p] = obj.size;
    }
    Ok(GridEncoding {
        width,
        height,
        n_types: scene.catalog_size,
        cells,
        sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ObjectInstance, WorldPoint};

    fn obj(type_id: usize, x: f64, y: f64, size: f64) -> ObjectInstance {
        ObjectInstance {
            type_id,
            position: WorldPoint::new(x, y),
            size,
        }
    }

    #[test]
    fn empty_scene_encodes_to_zeros() {
        let enc = encode_grid(&Scene::new(3, vec![]).unwrap(), 4, 4).unwrap();
        assert!(enc.dense_x().iter().all(|&v| v == 0));
        assert!(enc.sizes.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_object_lands_in_its_cell_and_channel() {
        let scene = Scene::new(3, vec![obj(2, 0.0, 0.0, 1.5)]).unwrap();
        let enc = encode_grid(&scene, 4, 4).unwrap();
        assert_eq!(enc.x(3, 3, 2), 1);
        assert_eq!(enc.s(3, 3), 1.5);
        let ones: usize = enc.dense_x().iter().map(|&v| v as usize).sum();
        assert_eq!(ones, 1);
        assert_eq!(enc.sizes.iter().filter(|&&s| s != 0.0).count(), 1);
    }

    #[test]
    fn counts_and_size_mask_agree() {
        let scene = Scene::new(3, vec![obj(0, -0.5, -0.5, 1.0), obj(1, 0.5, 0.5, 2.0)]).unwrap();
        let enc = encode_grid(&scene, 4, 4).unwrap();
        assert_eq!(enc.dense_x().iter().map(|&v| v as usize).sum::<usize>(), 2);
        for (c, s) in enc.cells.iter().zip(&enc.sizes) {
            assert_eq!(c.is_none(), *s == 0.0);
        }
    }

    #[test]
    fn shared_cell_is_a_collision() {
        let scene = Scene::new(3, vec![obj(0, 0.01, 0.01, 1.0), obj(1, 0.02, 0.02, 2.0)]).unwrap();
        assert!(matches!(
            encode_grid(&scene, 4, 4),
            Err(Error::Collision { first: 0, second: 1, i: 3, j: 3 })
        ));
        // A finer grid separates them.
        assert!(encode_grid(&scene, 256, 256).is_ok());
    }

    #[test]
    fn invalid_scenes_are_rejected() {
        assert!(Scene::new(2, vec![obj(2, 0.0, 0.0, 1.0)]).is_err());
        assert!(Scene::new(2, vec![obj(0, 0.0, 0.0, 0.0)]).is_err());
        assert!(Scene::new(2, vec![obj(0, 0.0, -1.5, 1.0)]).is_err());
    }
}
