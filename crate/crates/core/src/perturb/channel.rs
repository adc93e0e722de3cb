use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::imgcore::{to_hsv, to_rgb, ColorSpace, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    R,
    G,
    B,
    H,
    S,
    V,
}

impl Channel {
    pub const ALL: [Channel; 6] = [Channel::R, Channel::G, Channel::B, Channel::H, Channel::S, Channel::V];

    pub fn is_hsv(self) -> bool {
        matches!(self, Channel::H | Channel::S | Channel::V)
    }

    /// Position of the channel within its color space's pixel triple.
    pub fn plane(self) -> usize {
        match self {
            Channel::R | Channel::H => 0,
            Channel::G | Channel::S => 1,
            Channel::B | Channel::V => 2,
        }
    }

    pub fn bounds(self) -> ChannelShiftParams {
        match self {
            Channel::V => ChannelShiftParams { floor: 10.0, ceiling: 255.0 },
            Channel::H => ChannelShiftParams { floor: 0.0, ceiling: 179.0 },
            _ => ChannelShiftParams { floor: 0.0, ceiling: 255.0 },
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Channel::R => "R",
            Channel::G => "G",
            Channel::B => "B",
            Channel::H => "H",
            Channel::S => "S",
            Channel::V => "V",
        };
        f.write_str(s)
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "R" => Channel::R,
            "G" => Channel::G,
            "B" => Channel::B,
            "H" => Channel::H,
            "S" => Channel::S,
            "V" => Channel::V,
            _ => return Err(Error::Parse(format!("unknown channel {s:?}, expected one of R G B H S V"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Darker,
    Lighter,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Darker => "darker",
            Direction::Lighter => "lighter",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "darker" => Ok(Direction::Darker),
            "lighter" => Ok(Direction::Lighter),
            _ => Err(Error::Parse(format!("unknown direction {s:?}, expected darker or lighter"))),
        }
    }
}

/// Value range `[floor, ceiling]` a channel is pulled toward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelShiftParams {
    pub floor: f64,
    pub ceiling: f64,
}

impl ChannelShiftParams {
    pub fn shifted(&self, value: f64, direction: Direction, alpha: f64) -> f64 {
        let target = match direction {
            Direction::Darker => self.floor,
            Direction::Lighter => self.ceiling,
        };
        alpha * target + (1.0 - alpha) * value
    }
}

/// Linear pull of one channel toward its floor (darker) or ceiling (lighter).
///
/// H/S/V shifts on an RGB image go through an HSV round trip and come back as
/// RGB; on an HSV image they are applied in place. R/G/B shifts need RGB.
pub fn channel_shift(img: &Image, channel: Channel, direction: Direction, alpha: f64) -> Result<Image> {
    ensure!((0.0..=1.0).contains(&alpha), "channel alpha must be in [0, 1], got {alpha}");
    if alpha == 0.0 {
        return Ok(img.clone());
    }
    let bounds = channel.bounds();
    let shift = |v: u8| crate::imgcore::quantize(bounds.shifted(f64::from(v), direction, alpha));
    match (channel.is_hsv(), img.space()) {
        (false, ColorSpace::Rgb) | (true, ColorSpace::Hsv) => {
            let mut out = img.clone();
            out.map_channel(channel.plane(), shift);
            Ok(out)
        }
        (true, ColorSpace::Rgb) => {
            let mut hsv = to_hsv(img)?;
            hsv.map_channel(channel.plane(), shift);
            to_rgb(&hsv)
        }
        (false, ColorSpace::Hsv) => Err(Error::Contract(format!("channel {channel} shift needs an RGB image"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane(img: &Image, c: usize) -> Vec<u8> {
        img.data().chunks_exact(3).map(|p| p[c]).collect()
    }

    fn sample() -> Image {
        let data: Vec<u8> = (0..8 * 4 * 3).map(|i| (i * 53 % 256) as u8).collect();
        Image::new(8, 4, ColorSpace::Rgb, data).unwrap()
    }

    #[test]
    fn alpha_zero_is_identity() {
        for ch in Channel::ALL {
            for dir in [Direction::Darker, Direction::Lighter] {
                assert_eq!(channel_shift(&sample(), ch, dir, 0.0).unwrap(), sample());
            }
        }
    }

    #[test]
    fn red_darker_full_zeroes_plane() {
        let out = channel_shift(&sample(), Channel::R, Direction::Darker, 1.0).unwrap();
        assert!(plane(&out, 0).iter().all(|&v| v == 0));
        assert_eq!(plane(&out, 1), plane(&sample(), 1));
        assert_eq!(plane(&out, 2), plane(&sample(), 2));
    }

    #[test]
    fn half_darker_hand_value() {
        let img = Image::filled(1, 1, [100, 7, 9]);
        let out = channel_shift(&img, Channel::R, Direction::Darker, 0.5).unwrap();
        assert_eq!(out.pixel(0, 0), [50, 7, 9]);
    }

    #[test]
    fn value_darker_full_is_floor_ten() {
        let out = channel_shift(&sample(), Channel::V, Direction::Darker, 1.0).unwrap();
        let hsv = to_hsv(&out).unwrap();
        assert!(plane(&hsv, 2).iter().all(|&v| v == 10));
    }

    #[test]
    fn hue_lighter_stays_legal() {
        let hsv = to_hsv(&sample()).unwrap();
        let out = channel_shift(&hsv, Channel::H, Direction::Lighter, 1.0).unwrap();
        assert!(plane(&out, 0).iter().all(|&v| v == 179));
        assert!(channel_shift(&hsv, Channel::R, Direction::Lighter, 0.5).is_err());
    }

    #[test]
    fn alpha_out_of_range() {
        assert!(channel_shift(&sample(), Channel::G, Direction::Lighter, 1.5).is_err());
        assert!(channel_shift(&sample(), Channel::G, Direction::Lighter, -0.1).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("S".parse::<Channel>().unwrap(), Channel::S);
        assert!("X".parse::<Channel>().is_err());
        assert_eq!("lighter".parse::<Direction>().unwrap(), Direction::Lighter);
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(v in 0u8..=255, a1 in 0.0f64..=1.0, a2 in 0.0f64..=1.0, ch in 0usize..3) {
            let channel = Channel::ALL[ch];
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let img = Image::filled(1, 1, [v, v, v]);
            let get = |dir, a| channel_shift(&img, channel, dir, a).unwrap().pixel(0, 0)[ch];
            prop_assert!(get(Direction::Darker, hi) <= get(Direction::Darker, lo));
            prop_assert!(get(Direction::Lighter, hi) >= get(Direction::Lighter, lo));
            let d = get(Direction::Darker, hi);
            let l = get(Direction::Lighter, hi);
            prop_assert!(d <= v);
            prop_assert!(l >= v);
        }
    }
}
