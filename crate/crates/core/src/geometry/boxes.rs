use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::scalar::{cast, lit, Real};

/// Axis-aligned image box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox2D<T> {
    pub xmin: T,
    pub ymin: T,
    pub xmax: T,
    pub ymax: T,
}

impl<T: Real> BoundingBox2D<T> {
    pub fn new(xmin: T, ymin: T, xmax: T, ymax: T) -> Self {
        Self { xmin, ymin, xmax, ymax }
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    pub fn is_valid(&self) -> bool {
        self.xmin <= self.xmax && self.ymin <= self.ymax
    }

    pub fn width(&self) -> T {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> T {
        self.ymax - self.ymin
    }

    pub fn center(&self) -> (T, T) {
        let h = lit::<T>(0.5);
        ((self.xmin + self.xmax) * h, (self.ymin + self.ymax) * h)
    }

    pub fn clip(&self, width: T, height: T) -> Self {
        let cx = |v: T| v.max(T::zero()).min(width);
        let cy = |v: T| v.max(T::zero()).min(height);
        Self::new(cx(self.xmin), cy(self.ymin), cx(self.xmax), cy(self.ymax))
    }

    /// True when the box has positive-area overlap with `[0, width] × [0, height]`.
    pub fn intersects_image(&self, width: T, height: T) -> bool {
        self.xmax > T::zero() && self.ymax > T::zero() && self.xmin < width && self.ymin < height
    }

    /// True when the box lies entirely inside `[0, width] × [0, height]`.
    pub fn inside_image(&self, width: T, height: T) -> bool {
        self.xmin >= T::zero() && self.ymin >= T::zero() && self.xmax <= width && self.ymax <= height
    }

    pub fn cast<U: Real>(&self) -> BoundingBox2D<U> {
        BoundingBox2D::new(cast(self.xmin), cast(self.ymin), cast(self.xmax), cast(self.ymax))
    }
}

/// Axis-aligned 3D box given by its centre and half extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Box3D<T: Real> {
    pub center: Vector3<T>,
    pub half_extents: Vector3<T>,
}

impl<T: Real> Box3D<T> {
    pub fn new(center: Vector3<T>, half_extents: Vector3<T>) -> Self {
        Self { center, half_extents }
    }

    pub fn min(&self) -> Vector3<T> {
        self.center - self.half_extents
    }

    pub fn max(&self) -> Vector3<T> {
        self.center + self.half_extents
    }

    pub fn volume(&self) -> T {
        self.half_extents.iter().fold(T::one(), |acc, h| acc * *h * lit(2.0))
    }

    pub fn centered(&self) -> Self {
        Self { center: Vector3::zeros(), half_extents: self.half_extents }
    }

    pub fn intersection_volume(&self, other: &Self) -> T {
        let lo = self.min().sup(&other.min());
        let hi = self.max().inf(&other.max());
        (0..3).fold(T::one(), |acc, k| acc * (hi[k] - lo[k]).max(T::zero()))
    }

    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_volume(other);
        let union = self.volume() + other.volume() - inter;
        if union > T::zero() {
            inter / union
        } else {
            T::zero()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_and_visibility() {
        let b = BoundingBox2D::new(-10.0, 20.0, 50.0, 500.0);
        assert_eq!(b.clip(640.0, 480.0), BoundingBox2D::new(0.0, 20.0, 50.0, 480.0));
        assert!(b.intersects_image(640.0, 480.0));
        assert!(!b.inside_image(640.0, 480.0));
        assert!(!BoundingBox2D::new(700.0, 0.0, 800.0, 10.0).intersects_image(640.0, 480.0));
    }

    #[test]
    fn box_iou() {
        let a = Box3D::new(Vector3::zeros(), Vector3::repeat(0.5));
        let b = Box3D::new(Vector3::new(0.5, 0.0, 0.0), Vector3::repeat(0.5));
        assert!((a.iou(&b) - 0.5f64 / 1.5).abs() < 1e-15);
        assert_eq!(a.iou(&a), 1.0);
        let far = Box3D::new(Vector3::new(5.0, 0.0, 0.0), Vector3::repeat(0.5));
        assert_eq!(a.iou(&far), 0.0);
    }
}
