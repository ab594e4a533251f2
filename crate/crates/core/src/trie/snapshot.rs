//! Binary trie snapshots.
//!
//! Layout (every integer and float little-endian, floats as raw IEEE-754 bits):
//!
//! ```text
//! magic          8 bytes  "TANNSNAP"
//! version        u32      = 1
//! declared_depth u32
//! root           u32      (0xFFFF_FFFF = none)
//! node_count     u32
//! node_count × {
//!     left, right      u32 (0xFFFF_FFFF = none)
//!     feature_index    u32
//!     input_width      u32
//!     loss             u8   (0 bce, 1 mse, 2 cross-entropy)
//!     layer_count      u32
//!     layer_count × layer
//! }
//! ```
//!
//! Each layer starts with a tag byte:
//!
//! | tag | layer         | payload                                                          |
//! |-----|---------------|------------------------------------------------------------------|
//! | 0   | dense         | rows u32, cols u32, weight f64×rows·cols, bias f64×rows          |
//! | 1   | activation    | u8 (0 relu, 1 sigmoid, 2 identity)                               |
//! | 2   | dropout       | p f64                                                            |
//! | 3   | recurrent     | hidden u32, step_width u32, steps u32, w_ih, w_hh, bias          |
//! | 4   | conv1d        | channels u32, width u32, kernels f64×channels·width, bias f64×channels |
//! | 5   | complex dense | rows u32, cols u32, real_input u8, weight (re, im)×rows·cols, bias (re, im)×rows |
//! | 6   | magnitude     | none                                                             |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{NodeId, Trie, TrieNode};
use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, Matrix};
use crate::nn::{Activation, ComplexDense, Conv1d, Dense, Layer, LossKind, Network, Recurrent};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"TANNSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;
const NONE: u32 = u32::MAX;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.0.write_all(&[v])
    }
    fn u32(&mut self, v: usize) -> std::io::Result<()> {
        let v = u32::try_from(v).map_err(|_| std::io::Error::other("value exceeds u32"))?;
        self.0.write_all(&v.to_le_bytes())
    }
    fn id(&mut self, id: Option<NodeId>) -> std::io::Result<()> {
        match id {
            Some(NodeId(i)) => self.u32(i),
            None => self.0.write_all(&NONE.to_le_bytes()),
        }
    }
    fn f64s(&mut self, vs: &[f64]) -> std::io::Result<()> {
        vs.iter()
            .try_for_each(|v| self.0.write_all(&v.to_bits().to_le_bytes()))
    }
    fn complex(&mut self, vs: &[Complex64]) -> std::io::Result<()> {
        vs.iter().try_for_each(|z| self.f64s(&[z.re, z.im]))
    }

    fn layer(&mut self, layer: &Layer) -> std::io::Result<()> {
        match layer {
            Layer::Dense(d) => {
                self.u8(0)?;
                self.u32(d.weight.rows())?;
                self.u32(d.weight.cols())?;
                self.f64s(d.weight.data())?;
                self.f64s(&d.bias)
            }
            Layer::Activation(a) => {
                self.u8(1)?;
                self.u8(match a {
                    Activation::Relu => 0,
                    Activation::Sigmoid => 1,
                    Activation::Identity => 2,
                })
            }
            Layer::Dropout { p } => {
                self.u8(2)?;
                self.f64s(&[*p])
            }
            Layer::Recurrent(r) => {
                self.u8(3)?;
                self.u32(r.hidden_size())?;
                self.u32(r.step_width())?;
                self.u32(r.steps)?;
                self.f64s(r.w_ih.data())?;
                self.f64s(r.w_hh.data())?;
                self.f64s(&r.bias)
            }
            Layer::Conv1d(c) => {
                self.u8(4)?;
                self.u32(c.out_channels())?;
                self.u32(c.kernel_width())?;
                self.f64s(c.kernels.data())?;
                self.f64s(&c.bias)
            }
            Layer::ComplexDense(c) => {
                self.u8(5)?;
                self.u32(c.weight.rows())?;
                self.u32(c.weight.cols())?;
                self.u8(c.real_input as u8)?;
                self.complex(c.weight.data())?;
                self.complex(&c.bias)
            }
            Layer::Magnitude => self.u8(6),
        }
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated snapshot: {e}")))?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }
    fn id(&mut self) -> Result<Option<NodeId>> {
        let v = u32::from_le_bytes(self.bytes()?);
        Ok((v != NONE).then_some(NodeId(v as usize)))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(u64::from_le_bytes(self.bytes()?)))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn complex(&mut self, n: usize) -> Result<Vec<Complex64>> {
        (0..n)
            .map(|_| Ok(Complex64::new(self.f64()?, self.f64()?)))
            .collect()
    }

    fn layer(&mut self) -> Result<Layer> {
        Ok(match self.u8()? {
            0 => {
                let (rows, cols) = (self.u32()?, self.u32()?);
                Layer::Dense(Dense {
                    weight: Matrix::from_vec(rows, cols, self.f64s(rows * cols)?)?,
                    bias: self.f64s(rows)?,
                })
            }
            1 => Layer::Activation(match self.u8()? {
                0 => Activation::Relu,
                1 => Activation::Sigmoid,
                2 => Activation::Identity,
                t => return Err(Error::Format(format!("unknown activation tag {t}"))),
            }),
            2 => Layer::dropout(self.f64()?)?,
            3 => {
                let (h, d, steps) = (self.u32()?, self.u32()?, self.u32()?);
                Layer::Recurrent(Recurrent {
                    w_ih: Matrix::from_vec(h, d, self.f64s(h * d)?)?,
                    w_hh: Matrix::from_vec(h, h, self.f64s(h * h)?)?,
                    bias: self.f64s(h)?,
                    steps,
                })
            }
            4 => {
                let (ch, k) = (self.u32()?, self.u32()?);
                Layer::Conv1d(Conv1d {
                    kernels: Matrix::from_vec(ch, k, self.f64s(ch * k)?)?,
                    bias: self.f64s(ch)?,
                })
            }
            5 => {
                let (rows, cols) = (self.u32()?, self.u32()?);
                let real_input = self.u8()? != 0;
                Layer::ComplexDense(ComplexDense {
                    weight: ComplexMatrix::from_vec(rows, cols, self.complex(rows * cols)?)?,
                    bias: self.complex(rows)?,
                    real_input,
                })
            }
            6 => Layer::Magnitude,
            t => return Err(Error::Format(format!("unknown layer tag {t}"))),
        })
    }
}

fn loss_tag(kind: LossKind) -> u8 {
    match kind {
        LossKind::Bce => 0,
        LossKind::Mse => 1,
        LossKind::CrossEntropy => 2,
    }
}

impl Trie {
    pub fn write_snapshot<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = Writer(out);
        w.0.write_all(SNAPSHOT_MAGIC)?;
        w.u32(SNAPSHOT_VERSION as usize)?;
        w.u32(self.declared_depth)?;
        w.id(self.root)?;
        w.u32(self.nodes.len())?;
        for n in &self.nodes {
            w.id(n.left)?;
            w.id(n.right)?;
            w.u32(n.feature_index)?;
            w.u32(n.net.input_width())?;
            w.u8(loss_tag(n.net.loss()))?;
            w.u32(n.net.layers().len())?;
            for layer in n.net.layers() {
                w.layer(layer)?;
            }
        }
        w.0.flush()
    }

    pub fn read_snapshot<R: Read>(input: R) -> Result<Trie> {
        let mut r = Reader(input);
        if &r.bytes::<8>()? != SNAPSHOT_MAGIC {
            return Err(Error::Format("not a trie snapshot (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION as usize {
            return Err(Error::Format(format!(
                "unsupported snapshot version {version}"
            )));
        }
        let declared_depth = r.u32()?;
        let root = r.id()?;
        let count = r.u32()?;
        let mut nodes = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let (left, right) = (r.id()?, r.id()?);
            let feature_index = r.u32()?;
            let input_width = r.u32()?;
            let loss = match r.u8()? {
                0 => LossKind::Bce,
                1 => LossKind::Mse,
                2 => LossKind::CrossEntropy,
                t => return Err(Error::Format(format!("unknown loss tag {t}"))),
            };
            let layers = (0..r.u32()?)
                .map(|_| r.layer())
                .collect::<Result<Vec<_>>>()?;
            nodes.push(TrieNode {
                left,
                right,
                net: Network::new(input_width, layers, loss)?,
                feature_index,
            });
        }
        let mut trie = Trie::from_nodes(nodes, root)?;
        trie.declared_depth = declared_depth;
        Ok(trie)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_snapshot(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Trie> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Trie::read_snapshot(BufReader::new(file))
    }
}
