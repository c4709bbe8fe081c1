#pragma once

#include "autoscaler.hpp"
#include "batch.hpp"
#include "errors.hpp"
#include "hooks.hpp"
#include "map.hpp"
#include "reclamation.hpp"
#include "revision.hpp"
#include "snapshot_registry.hpp"
#include "version_clock.hpp"
