//! Item orders.
//!
//! The sketch only ever compares items, so any strict weak order works.
//! Ranks are defined with `≤`: items the order calls equal are
//! interchangeable.

use std::cmp::Ordering;

pub trait ItemOrder<T>: Clone {
    fn compare(&self, a: &T, b: &T) -> Ordering;

    /// Whether `item` may be inserted. Orders over types with unordered
    /// values (NaN) reject them here.
    fn accepts(&self, _item: &T) -> bool {
        true
    }

    fn le(&self, a: &T, b: &T) -> bool {
        self.compare(a, b) != Ordering::Greater
    }
}

/// Total order on finite and infinite `f64` values; NaN is rejected.
///
/// Uses [`f64::total_cmp`], so `-0.0 < 0.0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct F64Order;

impl ItemOrder<f64> for F64Order {
    #[inline]
    fn compare(&self, a: &f64, b: &f64) -> Ordering {
        a.total_cmp(b)
    }

    #[inline]
    fn accepts(&self, item: &f64) -> bool {
        !item.is_nan()
    }
}

/// The type's own [`Ord`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct NaturalOrder;

impl<T: Ord> ItemOrder<T> for NaturalOrder {
    #[inline]
    fn compare(&self, a: &T, b: &T) -> Ordering {
        a.cmp(b)
    }
}

/// Reverses an order. Rank queries then count items `≥ y` under the inner
/// order, which moves the exact end of the sketch to the largest items.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Reversed<O>(pub O);

impl<T, O: ItemOrder<T>> ItemOrder<T> for Reversed<O> {
    #[inline]
    fn compare(&self, a: &T, b: &T) -> Ordering {
        self.0.compare(b, a)
    }

    fn accepts(&self, item: &T) -> bool {
        self.0.accepts(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_order_rejects_nan_and_orders_zeros() {
        assert!(!F64Order.accepts(&f64::NAN));
        assert!(F64Order.accepts(&f64::INFINITY));
        assert_eq!(F64Order.compare(&-0.0, &0.0), Ordering::Less);
        assert!(F64Order.le(&1.0, &1.0));
    }

    #[test]
    fn reversed_flips() {
        let o = Reversed(NaturalOrder);
        assert_eq!(o.compare(&1, &2), Ordering::Greater);
        assert!(o.le(&3, &2));
    }
}
