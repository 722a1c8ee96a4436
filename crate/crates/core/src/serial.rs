//! Serde adapters: vectors as `[x, y, z]`, complex matrices as rows of
//! entries, each entry either a real number or `[re, im]`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{CMat2, CMat3, Vec3, C64};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Pair([f64; 2]),
}

impl From<Entry> for C64 {
    fn from(e: Entry) -> C64 {
        match e {
            Entry::Real(x) => C64::from(x),
            Entry::Pair([re, im]) => C64::new(re, im),
        }
    }
}

fn rows<const N: usize>(get: impl Fn(usize, usize) -> C64) -> Vec<Vec<[f64; 2]>> {
    (0..N)
        .map(|i| (0..N).map(|j| get(i, j)).map(|z| [z.re, z.im]).collect())
        .collect()
}

fn parse_rows<'de, D: Deserializer<'de>, const N: usize>(de: D) -> Result<[[C64; N]; N], D::Error> {
    let raw: Vec<Vec<Entry>> = Vec::deserialize(de)?;
    if raw.len() != N || raw.iter().any(|r| r.len() != N) {
        return Err(serde::de::Error::custom(format!(
            "expected a {N}x{N} matrix"
        )));
    }
    let mut out = [[C64::from(0.0); N]; N];
    for (i, row) in raw.into_iter().enumerate() {
        for (j, e) in row.into_iter().enumerate() {
            out[i][j] = e.into();
        }
    }
    Ok(out)
}

pub mod vec3 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(x, y, z))
    }
}

pub mod cmat3 {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat3, s: S) -> Result<S::Ok, S::Error> {
        rows::<3>(|i, j| m[(i, j)]).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat3, D::Error> {
        let a = parse_rows::<D, 3>(d)?;
        Ok(CMat3::from_fn(|i, j| a[i][j]))
    }
}

pub mod cmat2 {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat2, s: S) -> Result<S::Ok, S::Error> {
        rows::<2>(|i, j| m[(i, j)]).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat2, D::Error> {
        let a = parse_rows::<D, 2>(d)?;
        Ok(CMat2::from_fn(|i, j| a[i][j]))
    }
}

pub mod cmat2_vec {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::cmat2")] CMat2);

    pub fn serialize<S: Serializer>(m: &[CMat2], s: S) -> Result<S::Ok, S::Error> {
        let w: Vec<Wrap> = m.iter().copied().map(Wrap).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat2>, D::Error> {
        Ok(Vec::<Wrap>::deserialize(d)?
            .into_iter()
            .map(|w| w.0)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct T {
        #[serde(with = "cmat3")]
        m: CMat3,
        #[serde(with = "vec3")]
        p: Vec3,
    }

    #[test]
    fn accepts_real_and_pair_entries() {
        let t: T = serde_json::from_str(
            r#"{"m": [[1, [0, 1], 0], [[0, 1], 2, 0], [0, 0, [1, -1]]], "p": [1, 2, 3]}"#,
        )
        .unwrap();
        assert_eq!(t.m[(0, 1)], C64::new(0.0, 1.0));
        assert_eq!(t.m[(2, 2)], C64::new(1.0, -1.0));
        let again: T = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(again.m, t.m);
        assert_eq!(again.p, t.p);
    }

    #[test]
    fn rejects_wrong_shape() {
        assert!(serde_json::from_str::<T>(r#"{"m": [[1, 2], [3, 4]], "p": [0, 0, 0]}"#).is_err());
    }
}
