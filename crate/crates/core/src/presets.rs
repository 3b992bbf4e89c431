//! Named experiment setups shipped with the crate. Each is a complete
//! experiment file that a user config can name with `preset = "..."` and
//! then override key by key.

macro_rules! presets {
    ($($name:literal => $summary:literal),* $(,)?) => {
        /// `(name, one-line summary, TOML text)` for every shipped preset.
        pub const PRESETS: &[(&str, &str, &str)] = &[
            $(($name, $summary, include_str!(concat!("../presets/", $name, ".toml")))),*
        ];
    };
}

presets! {
    "table2-g10" => "categorical skills |G|=10 on the 2D point mass",
    "table2-g10-sn" => "categorical skills |G|=10, spectrally normalized discriminator (c=2)",
    "table2-g20" => "categorical skills |G|=20 on the 2D point mass",
    "table2-g20-sn" => "categorical skills |G|=20, spectrally normalized discriminator (c=2)",
    "table2-g50" => "categorical skills |G|=50 on the 2D point mass",
    "table2-g50-sn" => "categorical skills |G|=50, spectrally normalized discriminator (c=2)",
    "pher-ablation-g50" => "table2-g50 with posterior hindsight relabeling at fraction 0.5",
    "agcrl-windy-2d" => "learned global sigma on the windy 2D point mass, wind ranges [0, 40]",
    "agcrl-windy-10d" => "learned global sigma on the windy 10D point mass, wind range 11*i",
    "lingcrl-proj-2x2" => "learned linear goal map under a random 2x2 observation projection",
    "lingcrl-proj-10x2" => "learned linear goal map under a random 10x2 observation projection",
    "gcrl-pointmass" => "plain goal reaching: fixed identity posterior with state relabeling",
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _, _)| *n == name).map(|(_, _, text)| *text)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _, _)| *n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;
    use std::path::Path;

    #[test]
    fn every_preset_parses_and_validates() {
        for name in preset_names() {
            let r = parse_config_str(&format!("preset = \"{name}\"\n"), Path::new("inline"))
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(r.config.run_name(), name);
        }
    }

    #[test]
    fn sn_variants_differ_only_in_the_constraint() {
        for g in [10, 20, 50] {
            let base: toml::Value = toml::from_str(preset_text(&format!("table2-g{g}")).unwrap()).unwrap();
            let mut sn: toml::Value = toml::from_str(preset_text(&format!("table2-g{g}-sn")).unwrap()).unwrap();
            let posterior = sn["posterior"].as_table_mut().unwrap();
            assert_eq!(posterior.remove("spectral_norm").unwrap().as_float(), Some(2.0));
            sn.as_table_mut().unwrap()["name"] = base["name"].clone();
            assert_eq!(base, sn);
        }
    }
}
