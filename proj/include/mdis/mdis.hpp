#pragma once

#include "mdis/eval.hpp"
#include "mdis/fusion.hpp"
#include "mdis/grid.hpp"
#include "mdis/hmt.hpp"
#include "mdis/hmt_io.hpp"
#include "mdis/image.hpp"
#include "mdis/io.hpp"
#include "mdis/pyramid.hpp"
#include "mdis/saliency.hpp"
#include "mdis/synth.hpp"
