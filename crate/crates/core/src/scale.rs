//! Doubling family of square scale windows and the binary-search fit that
//! assigns a bounding box to one of them.

use serde::{Deserialize, Serialize};

/// Square window; `index` counts from 1 and `side(i + 1) == 2 * side(i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScaleWindow {
    pub index: u32,
    pub side: u32,
}

/// An immutable, strictly increasing family of windows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowFamily {
    windows: Vec<ScaleWindow>,
}

pub fn generate_windows(base: u32, count: u32) -> WindowFamily {
    assert!(base >= 1 && count >= 1, "base and count must be positive");
    let windows = (0..count)
        .map(|i| ScaleWindow {
            index: i + 1,
            side: base
                .checked_shl(i)
                .filter(|s| s >> i == base)
                .expect("window side overflows u32"),
        })
        .collect();
    WindowFamily { windows }
}

impl WindowFamily {
    pub fn windows(&self) -> &[ScaleWindow] {
        &self.windows
    }

    pub fn base(&self) -> u32 {
        self.windows[0].side
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn largest(&self) -> ScaleWindow {
        *self.windows.last().expect("family is never empty")
    }

    /// Window with the given 1-based index, extending by doubling past the
    /// end of the family.
    pub fn window(&self, index: u32) -> ScaleWindow {
        assert!(index >= 1);
        ScaleWindow {
            index,
            side: self.base() << (index - 1),
        }
    }

    /// A new family grown by doubling until its largest side is `>= side`.
    pub fn extended_to(&self, side: u32) -> WindowFamily {
        let mut windows = self.windows.clone();
        while windows.last().expect("non-empty").side < side {
            let last = *windows.last().expect("non-empty");
            windows.push(ScaleWindow {
                index: last.index + 1,
                side: last.side.checked_mul(2).expect("window side overflows u32"),
            });
        }
        WindowFamily { windows }
    }
}

/// Smallest window whose side is `>= max(w, h)`.
///
/// The family is binary searched. Boxes larger than the largest window either
/// extend the family by doubling (`extensible`) or clamp to the largest.
pub fn map_to_window(bbox: (u32, u32), family: &WindowFamily, extensible: bool) -> ScaleWindow {
    map_to_window_counted(bbox, family, extensible).0
}

/// [`map_to_window`] that also reports how many side comparisons it made.
pub fn map_to_window_counted(
    bbox: (u32, u32),
    family: &WindowFamily,
    extensible: bool,
) -> (ScaleWindow, u32) {
    let (w, h) = bbox;
    assert!(w >= 1 && h >= 1, "bbox sides must be positive");
    let need = w.max(h);

    let mut comparisons = 1u32;
    let largest = family.largest();
    if need > largest.side {
        if !extensible {
            return (largest, comparisons);
        }
        // doubling from the largest side: side * 2^k >= need
        let mut window = largest;
        while window.side < need {
            window = ScaleWindow {
                index: window.index + 1,
                side: window.side.checked_mul(2).expect("window side overflows u32"),
            };
        }
        return (window, comparisons);
    }

    // invariant: sides[hi] >= need; answer lies in [lo, hi]
    let sides = family.windows();
    let (mut lo, mut hi) = (0usize, sides.len() - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        comparisons += 1;
        if sides[mid].side >= need {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (sides[lo], comparisons)
}

/// Comparisons `map_to_window` performs for a family of `len` windows, at most.
pub fn comparison_bound(len: usize) -> u32 {
    (len as f64).log2().ceil() as u32 + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sides(f: &WindowFamily) -> Vec<u32> {
        f.windows().iter().map(|w| w.side).collect()
    }

    #[test]
    fn generate_examples() {
        assert_eq!(sides(&generate_windows(4, 5)), vec![4, 8, 16, 32, 64]);
        assert_eq!(sides(&generate_windows(4, 1)), vec![4]);
        assert_eq!(sides(&generate_windows(3, 3)), vec![3, 6, 12]);
        let f = generate_windows(4, 5);
        assert!(f.windows().iter().enumerate().all(|(i, w)| w.index as usize == i + 1));
    }

    #[test]
    fn map_examples() {
        let f = generate_windows(4, 5);
        assert_eq!(map_to_window((3, 4), &f, true).side, 4);
        assert_eq!(map_to_window((15, 16), &f, true).side, 16);
        let big = map_to_window((70, 30), &f, true);
        assert_eq!((big.index, big.side), (6, 128));
        assert_eq!(map_to_window((70, 30), &f, false).side, 64);
    }

    #[test]
    fn extension_is_consistent_with_window_lookup() {
        let f = generate_windows(4, 5);
        let ext = f.extended_to(300);
        assert_eq!(sides(&ext), vec![4, 8, 16, 32, 64, 128, 256, 512]);
        assert_eq!(f.window(7), ext.windows()[6]);
        // extension returns a new value; the original is unchanged
        assert_eq!(f.len(), 5);
    }

    #[test]
    fn comparison_count_is_logarithmic() {
        for count in 1..=9 {
            let f = generate_windows(4, count);
            let bound = comparison_bound(f.len());
            for need in 1..=f.largest().side * 3 {
                let (_, used) = map_to_window_counted((need, 1), &f, true);
                assert!(used <= bound, "count {count}, need {need}: {used} > {bound}");
            }
        }
    }
}
