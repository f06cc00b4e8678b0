use serde::{Deserialize, Serialize};

use crate::error::IllegalTransition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum GatewayMode {
    #[default]
    ManualDrive,
    ExternalControl,
    FallbackLimited,
    EmergencyStop,
}

impl GatewayMode {
    pub const ALL: [GatewayMode; 4] = [
        GatewayMode::ManualDrive,
        GatewayMode::ExternalControl,
        GatewayMode::FallbackLimited,
        GatewayMode::EmergencyStop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GatewayMode::ManualDrive => "ManualDrive",
            GatewayMode::ExternalControl => "ExternalControl",
            GatewayMode::FallbackLimited => "FallbackLimited",
            GatewayMode::EmergencyStop => "EmergencyStop",
        }
    }
}

/// Modes that can be requested explicitly. `FallbackLimited` is only ever
/// entered by channel arbitration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeRequest {
    ManualDrive,
    ExternalControl,
    EmergencyStop,
}

impl ModeRequest {
    pub const ALL: [ModeRequest; 3] = [
        ModeRequest::ManualDrive,
        ModeRequest::ExternalControl,
        ModeRequest::EmergencyStop,
    ];

    pub fn code(self) -> u8 {
        match self {
            ModeRequest::ManualDrive => 0,
            ModeRequest::ExternalControl => 1,
            ModeRequest::EmergencyStop => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeSource {
    Driver,
    Sds,
    Bench,
}

impl ModeSource {
    pub const ALL: [ModeSource; 3] = [ModeSource::Driver, ModeSource::Sds, ModeSource::Bench];

    pub fn code(self) -> u8 {
        match self {
            ModeSource::Driver => 0,
            ModeSource::Sds => 1,
            ModeSource::Bench => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == code)
    }
}

/// Operating-mode transition function.
///
/// * Driver → ManualDrive from any state except EmergencyStop (override).
/// * SDS → ExternalControl only from ManualDrive below `handover_speed`.
/// * Bench → EmergencyStop from any state.
/// * Bench → ManualDrive only from EmergencyStop (reset).
pub fn set_mode(
    current: GatewayMode,
    request: ModeRequest,
    source: ModeSource,
    speed: f64,
    handover_speed: f64,
) -> Result<GatewayMode, IllegalTransition> {
    use GatewayMode as M;
    use ModeRequest as R;
    use ModeSource as S;
    let next = match (source, request, current) {
        (S::Bench, R::EmergencyStop, _) => Some(M::EmergencyStop),
        (S::Bench, R::ManualDrive, M::EmergencyStop) => Some(M::ManualDrive),
        (S::Driver, R::ManualDrive, m) if m != M::EmergencyStop => Some(M::ManualDrive),
        (S::Sds, R::ExternalControl, M::ManualDrive) if speed < handover_speed => {
            Some(M::ExternalControl)
        }
        _ => None,
    };
    next.ok_or(IllegalTransition {
        from: current,
        request,
        requester: source,
    })
}
