//! Dense row-major 2D grids and boolean masks.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A `height × width` row-major grid. Pixel `(col, row)` is `data[row * width + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type Mask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dimension(width * height, data.len()));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dimension(
                alloc::format!("{}x{}", self.width, self.height),
                alloc::format!("{}x{}", other.width, other.height),
            ))
        }
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, col: usize, row: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// `(col, row)` of every cell, in storage order.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        (0..self.data.len()).map(move |i| (i % w, i / w))
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.check_shape(other)?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    /// Removes every pixel within `radius` (Chebyshev distance) of an unmasked
    /// pixel or of the image border.
    pub fn erode(&self, radius: usize) -> Mask {
        let r = radius as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        Grid::from_fn(self.width, self.height, |col, row| {
            if !*self.get(col, row) {
                return false;
            }
            for dr in -r..=r {
                for dc in -r..=r {
                    let (c, rr) = (col as isize + dc, row as isize + dr);
                    if c < 0 || rr < 0 || c >= w || rr >= h || !*self.get(c as usize, rr as usize) {
                        return false;
                    }
                }
            }
            true
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erode_shrinks_square() {
        let mask = Grid::from_fn(9, 9, |c, r| (2..7).contains(&c) && (2..7).contains(&r));
        assert_eq!(mask.count(), 25);
        let e = mask.erode(1);
        assert_eq!(e.count(), 9);
        assert!(*e.get(4, 4));
        assert!(!*e.get(2, 4));
        assert_eq!(mask.erode(0), mask);
    }

    #[test]
    fn erode_respects_border() {
        let mask = Grid::filled(5, 5, true);
        assert_eq!(mask.erode(1).count(), 9);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Grid::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}

/// Multi-channel float image, channels interleaved per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::dimension(width * height * channels, data.len()));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel(&self, col: usize, row: usize) -> &[f64] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, col: usize, row: usize) -> &mut [f64] {
        let i = (row * self.width + col) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}
