//! Big-endian byte cursor shared by the binary formats.

use crate::group::{DecodeError, Group};
use crate::merkle::{Digest, InclusionProof};

pub(crate) struct Reader<'a>(pub(crate) &'a [u8]);

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.0.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn digest(&mut self) -> Result<Digest, DecodeError> {
        Ok(self.take(32)?.try_into().expect("32 bytes"))
    }

    pub(crate) fn scalar<G: Group>(&mut self) -> Result<G::Scalar, DecodeError> {
        G::decode_scalar(self.take(G::SCALAR_LEN)?)
    }

    pub(crate) fn element<G: Group>(&mut self) -> Result<G::Element, DecodeError> {
        G::decode_element(self.take(G::ELEMENT_LEN)?)
    }

    /// `count (u32) || u32*`
    pub(crate) fn u32_list(&mut self) -> Result<Vec<u32>, DecodeError> {
        let n = self.u32()? as usize;
        if self.0.len() < n.saturating_mul(4) {
            return Err(DecodeError::Truncated);
        }
        (0..n).map(|_| self.u32()).collect()
    }

    /// `length (u32) || bytes`
    pub(crate) fn var_bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    pub(crate) fn proof(&mut self) -> Result<InclusionProof, DecodeError> {
        let (p, rest) = InclusionProof::decode_prefix(self.0)?;
        self.0 = rest;
        Ok(p)
    }

    pub(crate) fn finish(&self) -> Result<(), DecodeError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::Malformed("trailing bytes"))
        }
    }
}

pub(crate) fn put_u32_list(out: &mut Vec<u8>, items: &[u32]) {
    out.extend((items.len() as u32).to_be_bytes());
    for i in items {
        out.extend(i.to_be_bytes());
    }
}

pub(crate) fn put_var_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend((bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}
