use super::BinaryMask;
use crate::exec::{self, Execution};

fn disc_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn apply(mask: &BinaryMask, radius: u32, erode: bool) -> BinaryMask {
    let offsets = disc_offsets(radius);
    let (w, h) = (mask.width(), mask.height());
    let mut bits = vec![false; w as usize * h as usize];
    exec::for_each_row(Execution::default(), &mut bits, w as usize, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let (x, y) = (x as i64, y as i64);
            *out = if erode {
                // pixels outside the image do not erode the border
                offsets.iter().all(|&(dx, dy)| {
                    let (nx, ny) = (x + dx, y + dy);
                    nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || mask.get(nx as u32, ny as u32)
                })
            } else {
                offsets.iter().any(|&(dx, dy)| mask.get_signed(x + dx, y + dy))
            };
        }
    });
    BinaryMask::from_bits(w, h, bits)
}

/// Erosion by a disc of the given radius.
pub fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    apply(mask, radius, true)
}

/// Dilation by a disc of the given radius.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    apply(mask, radius, false)
}

/// Erosion then dilation; removes specks narrower than the disc.
pub fn morph_open(mask: &BinaryMask, radius: u32) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

/// Dilation then erosion; fills holes narrower than the disc.
pub fn morph_close(mask: &BinaryMask, radius: u32) -> BinaryMask {
    erode(&dilate(mask, radius), radius)
}

/// Sets every background pixel that cannot reach the image border through
/// 4-connected background.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut outside = vec![false; (w * h) as usize];
    let mut stack: Vec<(i64, i64)> = Vec::new();
    for x in 0..w {
        stack.push((x, 0));
        stack.push((x, h - 1));
    }
    for y in 0..h {
        stack.push((0, y));
        stack.push((w - 1, y));
    }
    while let Some((x, y)) = stack.pop() {
        if x < 0 || y < 0 || x >= w || y >= h {
            continue;
        }
        let i = (y * w + x) as usize;
        if outside[i] || mask.get(x as u32, y as u32) {
            continue;
        }
        outside[i] = true;
        stack.extend([(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]);
    }
    BinaryMask::from_bits(mask.width(), mask.height(), outside.into_iter().map(|o| !o).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disc_mask(size: u32, cx: i64, cy: i64, r: i64) -> BinaryMask {
        BinaryMask::from_fn(size, size, |x, y| {
            let (dx, dy) = (x as i64 - cx, y as i64 - cy);
            dx * dx + dy * dy <= r * r
        })
    }

    #[test]
    fn open_removes_isolated_pixel() {
        let mut m = BinaryMask::new(9, 9);
        m.set(4, 4, true);
        assert!(morph_open(&m, 1).is_empty());
    }

    #[test]
    fn close_fills_pinhole() {
        let mut m = disc_mask(40, 20, 20, 12);
        m.set(20, 20, false);
        let closed = morph_close(&m, 1);
        assert!(closed.get(20, 20));
    }

    #[test]
    fn open_close_is_idempotent_on_disc() {
        // ~30-pixel disc: radius 3 gives 29 pixels
        let m = disc_mask(20, 9, 10, 3);
        assert!((25..=35).contains(&m.count()));
        let once = morph_open(&morph_close(&m, 2), 2);
        let twice = morph_open(&morph_close(&once, 2), 2);
        assert_eq!(once, twice);
    }

    #[test]
    fn border_pixels_survive_closing() {
        let m = BinaryMask::from_fn(10, 10, |x, _| x == 0);
        assert!(m.is_subset_of(&morph_close(&m, 2)));
    }

    #[test]
    fn ring_is_filled() {
        let ring = BinaryMask::from_fn(20, 20, |x, y| {
            let d = (x as i64 - 10).pow(2) + (y as i64 - 10).pow(2);
            (25..=49).contains(&d)
        });
        let filled = fill_holes(&ring);
        assert!(filled.get(10, 10));
        assert!(!filled.get(0, 0));
        assert_eq!(filled, disc_mask(20, 10, 10, 7));
    }

    proptest! {
        #[test]
        fn open_shrinks_close_grows(bits in proptest::collection::vec(any::<bool>(), 14 * 11), r in 1u32..4) {
            let m = BinaryMask::from_bits(14, 11, bits);
            prop_assert!(morph_open(&m, r).is_subset_of(&m));
            prop_assert!(m.is_subset_of(&morph_close(&m, r)));
            prop_assert!(m.is_subset_of(&fill_holes(&m)));
            prop_assert_eq!(fill_holes(&fill_holes(&m)), fill_holes(&m));
        }
    }
}
