//! 4-ary Merkle tree over ordered digests, with membership proofs.
//!
//! Node rules: empty input hashes to the sentinel `digest(empty)`; a leaf
//! hashes as `digest(0x00 || leaf)`; an internal node hashes as
//! `digest(0x01 || c0 || c1 || c2 || c3)` with missing children replaced
//! by the sentinel. A single leaf is its own root (no internal node).

use thiserror::Error;

use crate::ledger::{hash_parts, Digest};

pub const BRANCH: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Sentinel digest standing in for absent subtrees.
pub fn sentinel() -> Digest {
    hash_parts(&[b""])
}

fn leaf_hash(leaf: &Digest) -> Digest {
    hash_parts(&[&[0x00], leaf.as_bytes()])
}

fn node_hash(children: &[Digest; BRANCH]) -> Digest {
    hash_parts(&[
        &[0x01],
        children[0].as_bytes(),
        children[1].as_bytes(),
        children[2].as_bytes(),
        children[3].as_bytes(),
    ])
}

fn next_level(level: &[Digest]) -> Vec<Digest> {
    let pad = sentinel();
    level
        .chunks(BRANCH)
        .map(|chunk| {
            let mut children = [pad; BRANCH];
            children[..chunk.len()].copy_from_slice(chunk);
            node_hash(&children)
        })
        .collect()
}

pub fn merkle_root(leaves: &[Digest]) -> Digest {
    if leaves.is_empty() {
        return sentinel();
    }
    let mut level: Vec<Digest> = leaves.iter().map(leaf_hash).collect();
    while level.len() > 1 {
        level = next_level(&level);
    }
    level[0]
}

/// One proof step: the node's slot in its parent and the three siblings
/// in slot order.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProofStep {
    pub position: usize,
    pub siblings: [Digest; BRANCH - 1],
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct MerkleProof {
    pub steps: Vec<ProofStep>,
}

pub fn merkle_prove(leaves: &[Digest], index: usize) -> Result<MerkleProof, MerkleError> {
    if index >= leaves.len() {
        return Err(MerkleError::IndexOutOfRange {
            index,
            len: leaves.len(),
        });
    }
    let pad = sentinel();
    let mut level: Vec<Digest> = leaves.iter().map(leaf_hash).collect();
    let mut idx = index;
    let mut steps = Vec::new();
    while level.len() > 1 {
        let chunk_start = (idx / BRANCH) * BRANCH;
        let position = idx % BRANCH;
        let mut siblings = [pad; BRANCH - 1];
        let mut si = 0;
        for slot in 0..BRANCH {
            if slot == position {
                continue;
            }
            siblings[si] = level.get(chunk_start + slot).copied().unwrap_or(pad);
            si += 1;
        }
        steps.push(ProofStep { position, siblings });
        level = next_level(&level);
        idx /= BRANCH;
    }
    Ok(MerkleProof { steps })
}

pub fn merkle_verify(root: &Digest, leaf: &Digest, proof: &MerkleProof) -> bool {
    let mut acc = leaf_hash(leaf);
    for step in &proof.steps {
        if step.position >= BRANCH {
            return false;
        }
        let mut children = [Digest::ZERO; BRANCH];
        let mut si = 0;
        for (slot, child) in children.iter_mut().enumerate() {
            if slot == step.position {
                *child = acc;
            } else {
                *child = step.siblings[si];
                si += 1;
            }
        }
        acc = node_hash(&children);
    }
    acc == *root
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn leaves(n: usize) -> Vec<Digest> {
        (0..n)
            .map(|i| hash_parts(&[b"leaf", &(i as u64).to_be_bytes()]))
            .collect()
    }

    #[test]
    fn empty_root_is_sentinel() {
        assert_eq!(merkle_root(&[]), sentinel());
    }

    #[test]
    fn single_leaf_root_is_leaf_hash() {
        let l = hash_parts(&[b"solo"]);
        assert_eq!(merkle_root(&[l]), hash_parts(&[&[0x00], l.as_bytes()]));
    }

    #[test]
    fn four_leaf_root_matches_hand_expansion() {
        let ls = leaves(4);
        // hand-expanded: one internal node over the four leaf hashes
        let lh: Vec<Digest> = ls
            .iter()
            .map(|l| hash_parts(&[&[0x00], l.as_bytes()]))
            .collect();
        let expected = hash_parts(&[
            &[0x01],
            lh[0].as_bytes(),
            lh[1].as_bytes(),
            lh[2].as_bytes(),
            lh[3].as_bytes(),
        ]);
        assert_eq!(merkle_root(&ls), expected);
    }

    #[test]
    fn nine_leaf_proofs_all_verify() {
        let ls = leaves(9);
        let root = merkle_root(&ls);
        for (i, l) in ls.iter().enumerate() {
            let proof = merkle_prove(&ls, i).unwrap();
            assert!(merkle_verify(&root, l, &proof));
        }
    }

    #[test]
    fn flipped_leaf_bit_fails() {
        let ls = leaves(9);
        let root = merkle_root(&ls);
        let proof = merkle_prove(&ls, 4).unwrap();
        let mut bad = ls[4];
        bad.0[0] ^= 1;
        assert!(!merkle_verify(&root, &bad, &proof));
    }

    #[test]
    fn out_of_range_index_rejected() {
        let ls = leaves(3);
        assert_eq!(
            merkle_prove(&ls, 3).unwrap_err(),
            MerkleError::IndexOutOfRange { index: 3, len: 3 }
        );
    }

    proptest! {
        #[test]
        fn proofs_verify_and_mutations_fail(n in 1usize..40, idx_seed in 0usize..40, bit in 0usize..256) {
            let ls = leaves(n);
            let idx = idx_seed % n;
            let root = merkle_root(&ls);
            let proof = merkle_prove(&ls, idx).unwrap();
            prop_assert!(merkle_verify(&root, &ls[idx], &proof));

            let mut bad_leaf = ls[idx];
            bad_leaf.0[bit / 8] ^= 1 << (bit % 8);
            prop_assert!(!merkle_verify(&root, &bad_leaf, &proof));

            let mut bad_root = root;
            bad_root.0[bit / 8] ^= 1 << (bit % 8);
            prop_assert!(!merkle_verify(&bad_root, &ls[idx], &proof));

            if !proof.steps.is_empty() {
                let mut bad_proof = proof.clone();
                bad_proof.steps[0].siblings[0].0[bit / 8] ^= 1 << (bit % 8);
                prop_assert!(!merkle_verify(&root, &ls[idx], &bad_proof));
            }
        }
    }
}
