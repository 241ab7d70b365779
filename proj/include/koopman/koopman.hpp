#pragma once

#include "koopman/dictionary.hpp"
#include "koopman/edmd.hpp"
#include "koopman/error.hpp"
#include "koopman/harmonic.hpp"
#include "koopman/model_io.hpp"
#include "koopman/representation.hpp"
#include "koopman/spectral.hpp"
