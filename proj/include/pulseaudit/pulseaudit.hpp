#pragma once

#include "pulseaudit/autoenc.hpp"
#include "pulseaudit/calib.hpp"
#include "pulseaudit/common.hpp"
#include "pulseaudit/csv.hpp"
#include "pulseaudit/dsp.hpp"
#include "pulseaudit/features.hpp"
#include "pulseaudit/kdtree.hpp"
#include "pulseaudit/mi.hpp"
#include "pulseaudit/mvm.hpp"
#include "pulseaudit/report.hpp"
#include "pulseaudit/signals.hpp"
#include "pulseaudit/splits.hpp"
#include "pulseaudit/synth.hpp"
#include "pulseaudit/table.hpp"
#include "pulseaudit/window_file.hpp"
