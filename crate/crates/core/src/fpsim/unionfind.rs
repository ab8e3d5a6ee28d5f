//! Disjoint sets with O(1) member enumeration.
//!
//! Each set is also threaded as a circular singly linked list through
//! `next`; merging two sets swaps one successor pointer from each list.

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    next: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        let ids: Vec<u32> = (0..n as u32).collect();
        UnionFind { parent: ids.clone(), size: vec![1; n], next: ids }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns false if they already coincide.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        self.next.swap(ra as usize, rb as usize);
        true
    }

    pub fn set_size(&mut self, x: u32) -> usize {
        let r = self.find(x);
        self.size[r as usize] as usize
    }

    /// Calls `f` on every member of the set containing `x`, starting at `x`.
    pub fn for_each_member(&self, x: u32, mut f: impl FnMut(u32)) {
        let mut v = x;
        loop {
            f(v);
            v = self.next[v as usize];
            if v == x {
                break;
            }
        }
    }
}
