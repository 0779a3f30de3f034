#pragma once

#include "floq/assemble.hpp"
#include "floq/banded.hpp"
#include "floq/betasearch.hpp"
#include "floq/cocycle.hpp"
#include "floq/config.hpp"
#include "floq/dyadic.hpp"
#include "floq/errors.hpp"
#include "floq/evolution.hpp"
#include "floq/io.hpp"
#include "floq/model.hpp"
#include "floq/spectral.hpp"
#include "floq/util.hpp"
#include "floq/version.hpp"
