/// Rolling accumulated ACT counter per bank; requests an RFM every `raaimt` activations.
#[derive(Debug, Clone)]
pub struct RfmPolicy {
    raaimt: u32,
    raa: Vec<u32>,
    pub requests: u64,
}

impl RfmPolicy {
    pub fn new(banks: usize, raaimt: u32) -> Self {
        assert!(raaimt > 0, "raaimt must be positive");
        Self { raaimt, raa: vec![0; banks], requests: 0 }
    }

    pub fn raaimt(&self) -> u32 {
        self.raaimt
    }

    pub fn raa(&self, bank: usize) -> u32 {
        self.raa[bank]
    }

    /// Counts one activation; `true` when an RFM is due for the bank.
    pub fn on_activate(&mut self, bank: usize) -> bool {
        let c = &mut self.raa[bank];
        *c += 1;
        if *c >= self.raaimt {
            *c -= self.raaimt;
            self.requests += 1;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_crossing() {
        let mut r = RfmPolicy::new(1, 32);
        assert!(!(0..31).any(|_| r.on_activate(0)));
        assert!(r.on_activate(0));
        assert_eq!(r.raa(0), 0);
    }

    #[test]
    fn integer_division() {
        let mut r = RfmPolicy::new(2, 32);
        let n = (0..100).filter(|_| r.on_activate(1)).count();
        assert_eq!(n, 100 / 32);
        assert_eq!(r.raa(1), 100 % 32);
        assert_eq!(r.raa(0), 0);
    }
}
