pub mod gradcheck;
pub mod sweep;
pub mod synth;
pub mod train;

use clap::ValueEnum;
use ddjscc_core::ChannelMode;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ChannelArg {
    Awgn,
    Rayleigh,
    Noiseless,
}

impl From<ChannelArg> for ChannelMode {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Awgn => ChannelMode::Awgn,
            ChannelArg::Rayleigh => ChannelMode::Rayleigh,
            ChannelArg::Noiseless => ChannelMode::Noiseless,
        }
    }
}
