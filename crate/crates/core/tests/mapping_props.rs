//! The bounded double-hashing table must behave exactly like an
//! associative array for any put/remove/resolve sequence within capacity.

use proptest::prelude::*;
use std::collections::HashMap;
use vmtree_core::mapping::MappingTable;

#[derive(Debug, Clone)]
enum Op {
    Put(u32, u32),
    Remove(u32),
    Resolve(u32),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            (0u32..64, 1000u32..2000).prop_map(|(p, n)| Op::Put(p, n)),
            (0u32..64).prop_map(Op::Remove),
            (0u32..64).prop_map(Op::Resolve),
        ],
        1..400,
    )
}

proptest! {
    #[test]
    fn table_matches_associative_array(ops in ops()) {
        // capacity 128 entries (512 bytes, 4-byte entries for small spaces)
        let mut table = MappingTable::new(512, 4096);
        let mut oracle: HashMap<u32, u32> = HashMap::new();
        for op in ops {
            match op {
                Op::Put(p, n) => {
                    match table.put(p, n) {
                        Ok(()) => { oracle.insert(p, n); }
                        Err(_) => prop_assert!(oracle.len() >= table.capacity()),
                    }
                }
                Op::Remove(p) => {
                    table.remove(p);
                    oracle.remove(&p);
                }
                Op::Resolve(p) => {
                    let want = oracle.get(&p).copied().unwrap_or(p);
                    prop_assert_eq!(table.resolve(p), want);
                }
            }
            prop_assert_eq!(table.len(), oracle.len());
        }
        // final full sweep
        for p in 0u32..64 {
            let want = oracle.get(&p).copied().unwrap_or(p);
            prop_assert_eq!(table.resolve(p), want);
        }
    }

    // removing an entry in the middle of a probe chain must not hide
    // entries placed after it
    #[test]
    fn chain_survives_interior_removal(keys in prop::collection::vec(0u32..500, 3..40)) {
        let mut table = MappingTable::new(4096, 4096);
        let mut uniq = keys.clone();
        uniq.sort_unstable();
        uniq.dedup();
        for &k in &uniq {
            table.put(k, k + 10_000).unwrap();
        }
        for (i, &k) in uniq.iter().enumerate() {
            if i % 2 == 0 {
                table.remove(k);
            }
        }
        for (i, &k) in uniq.iter().enumerate() {
            let want = if i % 2 == 0 { k } else { k + 10_000 };
            prop_assert_eq!(table.resolve(k), want);
        }
    }
}

#[test]
fn replace_in_place_never_chains() {
    let mut table = MappingTable::new(1024, 4096);
    // L1 -> L2 -> L3 -> L4 rewrites of one node keep exactly one entry
    table.put(1, 2).unwrap();
    table.put(1, 3).unwrap();
    table.put(1, 4).unwrap();
    assert_eq!(table.len(), 1);
    assert_eq!(table.resolve(1), 4);
    assert_eq!(table.resolve(4), 4);
}

#[test]
fn full_table_rejects_without_change() {
    let mut table = MappingTable::new(16, 4096);
    let cap = table.capacity() as u32;
    for p in 0..cap {
        table.put(p, p + 100).unwrap();
    }
    assert!(table.put(cap, cap + 100).is_err());
    assert_eq!(table.len(), cap as usize);
    for p in 0..cap {
        assert_eq!(table.resolve(p), p + 100);
    }
}
