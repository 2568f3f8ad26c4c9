//! Single-producer single-consumer ring buffer that overwrites the oldest
//! item when full.
//!
//! Slots hold boxed items behind `AtomicPtr`. `head` is written only by the
//! producer; `tail` is advanced by compare-and-swap from either side, so
//! whoever wins the CAS for index `t` owns the item in slot `t`. The
//! producer never waits: a push is at most one CAS, one swap and two stores.
//! The consumer only dereferences a slot pointer after winning its CAS.

use std::sync::atomic::{AtomicPtr, AtomicU64, Ordering};
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_CAPACITY: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("ring capacity {0} is not a non-zero power of two")]
pub struct CapacityError(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PushOutcome {
    Accepted,
    /// The oldest item was discarded to make room.
    Overwrote,
}

struct Inner<T> {
    slots: Box<[AtomicPtr<T>]>,
    mask: u64,
    head: AtomicU64,
    tail: AtomicU64,
    dropped: AtomicU64,
}

// Items move between threads through owned boxes.
unsafe impl<T: Send> Send for Inner<T> {}
unsafe impl<T: Send> Sync for Inner<T> {}

impl<T> Inner<T> {
    fn slot(&self, idx: u64) -> &AtomicPtr<T> {
        &self.slots[(idx & self.mask) as usize]
    }
}

impl<T> Drop for Inner<T> {
    fn drop(&mut self) {
        let (t, h) = (*self.tail.get_mut(), *self.head.get_mut());
        for idx in t..h {
            let p = self.slot(idx).swap(std::ptr::null_mut(), Ordering::Relaxed);
            if !p.is_null() {
                // SAFETY: indices in [tail, head) are owned by the buffer and
                // both handles are gone.
                drop(unsafe { Box::from_raw(p) });
            }
        }
    }
}

pub fn channel<T: Send>(capacity: usize) -> Result<(Producer<T>, Consumer<T>), CapacityError> {
    if capacity == 0 || !capacity.is_power_of_two() {
        return Err(CapacityError(capacity));
    }
    let slots = (0..capacity).map(|_| AtomicPtr::new(std::ptr::null_mut())).collect();
    let inner = Arc::new(Inner {
        slots,
        mask: capacity as u64 - 1,
        head: AtomicU64::new(0),
        tail: AtomicU64::new(0),
        dropped: AtomicU64::new(0),
    });
    Ok((Producer { inner: inner.clone() }, Consumer { inner }))
}

pub struct Producer<T> {
    inner: Arc<Inner<T>>,
}

pub struct Consumer<T> {
    inner: Arc<Inner<T>>,
}

macro_rules! stats {
    () => {
        pub fn capacity(&self) -> usize {
            self.inner.slots.len()
        }

        pub fn len(&self) -> usize {
            let t = self.inner.tail.load(Ordering::Acquire);
            let h = self.inner.head.load(Ordering::Acquire);
            h.saturating_sub(t) as usize
        }

        pub fn is_empty(&self) -> bool {
            self.len() == 0
        }

        pub fn dropped(&self) -> u64 {
            self.inner.dropped.load(Ordering::Relaxed)
        }

        pub fn pushed(&self) -> u64 {
            self.inner.head.load(Ordering::Acquire)
        }
    };
}

impl<T: Send> Producer<T> {
    stats!();

    pub fn push(&mut self, item: T) -> PushOutcome {
        let inner = &*self.inner;
        let h = inner.head.load(Ordering::Relaxed);
        let t = inner.tail.load(Ordering::Acquire);
        let mut outcome = PushOutcome::Accepted;
        if h - t == inner.slots.len() as u64
            && inner.tail.compare_exchange(t, t + 1, Ordering::AcqRel, Ordering::Acquire).is_ok()
        {
            let old = inner.slot(t).swap(std::ptr::null_mut(), Ordering::AcqRel);
            if !old.is_null() {
                // SAFETY: winning the CAS on `t` transfers ownership of slot `t`.
                drop(unsafe { Box::from_raw(old) });
            }
            inner.dropped.fetch_add(1, Ordering::Relaxed);
            outcome = PushOutcome::Overwrote;
        }
        // A failed CAS means the consumer advanced tail, so slot `h` is free.
        inner.slot(h).store(Box::into_raw(Box::new(item)), Ordering::Release);
        inner.head.store(h + 1, Ordering::Release);
        outcome
    }
}

impl<T: Send> Consumer<T> {
    stats!();

    pub fn pop(&mut self) -> Option<T> {
        let inner = &*self.inner;
        loop {
            let t = inner.tail.load(Ordering::Acquire);
            let h = inner.head.load(Ordering::Acquire);
            if t >= h {
                return None;
            }
            let p = inner.slot(t).load(Ordering::Acquire);
            if inner.tail.compare_exchange(t, t + 1, Ordering::AcqRel, Ordering::Acquire).is_ok() {
                // SAFETY: the CAS on `t` succeeded, so the producer cannot
                // evict this slot and the pointer was published before head.
                return Some(*unsafe { Box::from_raw(p) });
            }
        }
    }

    pub fn drain(&mut self) -> Vec<T> {
        std::iter::from_fn(|| self.pop()).collect()
    }
}
