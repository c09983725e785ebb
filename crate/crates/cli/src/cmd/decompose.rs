use std::fs;

use anyhow::{bail, Context, Result};
use bnf_core::bitplane::{decompose, recompose, Container};

use crate::args::DecomposeArgs;
use crate::paths::under_root;
use crate::usage;

pub fn run(a: DecomposeArgs) -> Result<()> {
    let out = under_root(&a.output)?;
    let input = Container::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let Container::Fixed(fixed) = input else {
        bail!("{} is not a fixed-point tensor", a.input.display());
    };
    if let Some(m) = a.m {
        if m != fixed.bit_width() {
            return Err(usage(format!("--M {m} does not match the {}-bit file header", fixed.bit_width())));
        }
    }
    let planes = decompose(&fixed);
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    Container::Bits(planes.clone()).write(&out)?;
    println!("planes: {} (C·M = {}·{})", planes.plane_count(), fixed.shape().channels(), fixed.bit_width());
    println!("wrote {}", out.display());
    if a.roundtrip {
        let back = match Container::read(&out)? {
            Container::Bits(b) => recompose(&b),
            _ => bail!("{} did not read back as bit planes", out.display()),
        };
        if back == fixed {
            println!("roundtrip: PASS");
        } else {
            println!("roundtrip: FAIL");
            bail!("recomposed tensor differs from the input");
        }
    }
    Ok(())
}
