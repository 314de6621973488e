//! Built-in scenarios, addressed as `presets:NAME`.

/// One built-in scenario file.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    /// Name after `presets:`.
    pub name: &'static str,
    /// TOML text.
    pub text: &'static str,
}

impl Preset {
    /// First line of the leading comment.
    pub fn summary(&self) -> &'static str {
        self.text.lines().next().and_then(|l| l.strip_prefix("# ")).unwrap_or("")
    }
}

/// Every preset, in listing order.
pub const ALL: &[Preset] = &[
    Preset { name: "fig4-altitude", text: include_str!("../presets/fig4-altitude.toml") },
    Preset { name: "fig5-lateral-pos", text: include_str!("../presets/fig5-lateral-pos.toml") },
    Preset { name: "fig6-velocity-switch", text: include_str!("../presets/fig6-velocity-switch.toml") },
    Preset { name: "fig7-unified", text: include_str!("../presets/fig7-unified.toml") },
    Preset { name: "stress-infeasible", text: include_str!("../presets/stress-infeasible.toml") },
];

/// Looks a preset up by name.
pub fn get(name: &str) -> Option<&'static Preset> {
    ALL.iter().find(|p| p.name == name)
}
