#pragma once

#include "cellosc/core.hpp"
#include "cellosc/error.hpp"
#include "cellosc/geo.hpp"
#include "cellosc/io.hpp"
#include "cellosc/oscillation.hpp"
#include "cellosc/pipeline.hpp"
#include "cellosc/semantic.hpp"
#include "cellosc/synth.hpp"
