use proptest::prelude::*;
use streamlabel_core::embedding::{read_snapshot, write_snapshot};
use streamlabel_core::EmbeddingModel;

fn model_strategy() -> impl Strategy<Value = EmbeddingModel> {
    (1usize..6).prop_flat_map(|dim| {
        prop::collection::btree_map(
            "[a-zé]{1,8}",
            (
                prop::collection::vec(-10.0f32..10.0, dim),
                prop::collection::vec(-10.0f32..10.0, dim),
                1u64..1_000_000,
                any::<u64>(),
            ),
            0..20,
        )
        .prop_map(move |rows| {
            let mut m = EmbeddingModel::new(dim);
            for (w, (v, c, count, last)) in rows {
                m.insert(w, &v, &c, count, last);
            }
            m
        })
    })
}

proptest! {
    #[test]
    fn snapshot_roundtrip(m in model_strategy()) {
        let mut buf = Vec::new();
        write_snapshot(&m, &mut buf).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(back.words(), m.words());
        for i in 0..m.len() {
            prop_assert_eq!(back.vector_at(i), m.vector_at(i));
            prop_assert_eq!(back.context_at(i), m.context_at(i));
            prop_assert_eq!(back.count_at(i), m.count_at(i));
            prop_assert_eq!(back.last_used_at(i), m.last_used_at(i));
        }
        // The token total is not stored; it comes back as the sum of counts.
        prop_assert_eq!(back.total_tokens(), m.counts().iter().sum::<u64>());
        let mut again = Vec::new();
        write_snapshot(&back, &mut again).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn truncated_snapshots_are_rejected(m in model_strategy(), cut in 1usize..64) {
        let mut buf = Vec::new();
        write_snapshot(&m, &mut buf).unwrap();
        let keep = buf.len().saturating_sub(cut);
        prop_assert!(read_snapshot(&buf[..keep]).is_err());
    }
}
