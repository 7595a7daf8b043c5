#include "vlogdesk/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vlogdesk/errors.hpp"
#include "vlogdesk/rng.hpp"

namespace vlogdesk {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Binder {
    std::map<std::string, std::function<void(const std::string&)>> set;
    std::map<std::string, std::function<std::string()>> get;
    std::vector<std::string> order;

    void bind_int(const std::string& key, int* p) {
        order.push_back(key);
        set[key] = [p, key](const std::string& v) {
            try {
                *p = std::stoi(v);
            } catch (...) {
                fail_usage("config: invalid integer for " + key + ": '" + v + "'");
            }
        };
        get[key] = [p] { return std::to_string(*p); };
    }
    void bind_u64(const std::string& key, uint64_t* p) {
        order.push_back(key);
        set[key] = [p, key](const std::string& v) {
            try {
                *p = std::stoull(v);
            } catch (...) {
                fail_usage("config: invalid integer for " + key + ": '" + v + "'");
            }
        };
        get[key] = [p] { return std::to_string(*p); };
    }
    void bind_double(const std::string& key, double* p) {
        order.push_back(key);
        set[key] = [p, key](const std::string& v) {
            try {
                *p = std::stod(v);
            } catch (...) {
                fail_usage("config: invalid number for " + key + ": '" + v + "'");
            }
        };
        get[key] = [p] {
            std::ostringstream os;
            os << *p;
            return os.str();
        };
    }
    void bind_bool(const std::string& key, bool* p) {
        order.push_back(key);
        set[key] = [p, key](const std::string& v) {
            if (v == "true" || v == "1")
                *p = true;
            else if (v == "false" || v == "0")
                *p = false;
            else
                fail_usage("config: invalid boolean for " + key + ": '" + v + "'");
        };
        get[key] = [p] { return *p ? std::string("true") : std::string("false"); };
    }
    void bind_string(const std::string& key, std::string* p) {
        order.push_back(key);
        set[key] = [p](const std::string& v) { *p = v; };
        get[key] = [p] { return *p; };
    }
};

Binder make_binder(RunConfig& c) {
    Binder b;
    b.bind_int("data.train", &c.data.train);
    b.bind_int("data.test", &c.data.test);
    b.bind_double("data.duration", &c.data.duration);
    b.bind_double("data.fps", &c.data.fps);
    b.bind_int("data.resolution", &c.data.resolution);
    b.bind_u64("data.seed", &c.data.seed);

    b.bind_int("schedule.steps", &c.schedule.steps);
    b.bind_string("schedule.kind", &c.schedule.kind);

    b.bind_int("motion.width", &c.motion.width);
    b.bind_int("motion.heads", &c.motion.heads);
    b.bind_int("motion.layers", &c.motion.layers);
    b.bind_int("motion.mlp_mult", &c.motion.mlp_mult);
    b.bind_int("motion.mel_bins", &c.motion.mel_bins);
    b.bind_double("motion.lambda_temp_expr", &c.motion.lambda_temp_expr);
    b.bind_double("motion.lambda_temp_pose", &c.motion.lambda_temp_pose);
    b.bind_double("motion.p_drop", &c.motion.p_drop);
    b.bind_bool("motion.predict_residual", &c.motion.predict_residual);
    b.bind_int("motion.max_frames", &c.motion.max_frames);
    b.bind_int("motion.train_steps", &c.motion.train_steps);
    b.bind_int("motion.batch", &c.motion.batch);
    b.bind_double("motion.lr", &c.motion.lr);
    b.bind_int("motion.min_clip", &c.motion.min_clip);
    b.bind_int("motion.max_clip", &c.motion.max_clip);
    b.bind_int("motion.sample_steps", &c.motion.sample_steps);
    b.bind_double("motion.guidance", &c.motion.guidance);

    b.bind_int("video.base_channels", &c.video.base_channels);
    b.bind_int("video.temb_dim", &c.video.temb_dim);
    b.bind_int("video.groups", &c.video.groups);
    b.bind_int("video.attn_heads", &c.video.attn_heads);
    b.bind_int("video.temporal_kernel", &c.video.temporal_kernel);
    b.bind_string("video.mode", &c.video.mode);
    b.bind_int("video.base_steps", &c.video.base_steps);
    b.bind_int("video.base_batch", &c.video.base_batch);
    b.bind_double("video.base_lr", &c.video.base_lr);
    b.bind_int("video.stage1_steps", &c.video.stage1_steps);
    b.bind_int("video.stage1_batch", &c.video.stage1_batch);
    b.bind_int("video.stage2_steps", &c.video.stage2_steps);
    b.bind_int("video.stage2_clips", &c.video.stage2_clips);
    b.bind_double("video.lr", &c.video.lr);
    b.bind_int("video.train_clip_len", &c.video.train_clip_len);
    b.bind_int("video.gap_min", &c.video.gap_min);
    b.bind_int("video.clip_len", &c.video.clip_len);
    b.bind_int("video.overlap", &c.video.overlap);
    b.bind_int("video.sample_steps", &c.video.sample_steps);
    return b;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    RunConfig c;
    c.apply_file(path);
    return c;
}

void RunConfig::apply_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail_data("cannot open config file: " + path);
    Binder binder = make_binder(*this);
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                fail_usage("config " + path + ":" + std::to_string(lineno) + ": malformed section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail_usage("config " + path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = section + "." + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = binder.set.find(key);
        if (it == binder.set.end())
            fail_usage("config " + path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                       "'");
        it->second(value);
    }
}

std::string RunConfig::dump() const {
    Binder binder = make_binder(const_cast<RunConfig&>(*this));
    std::string out;
    std::string section;
    for (const auto& key : binder.order) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            section = sec;
            out += "[" + section + "]\n";
        }
        out += key.substr(dot + 1) + " = " + binder.get.at(key)() + "\n";
    }
    return out;
}

uint64_t RunConfig::hash() const {
    const std::string d = dump();
    return fnv1a64(d.data(), d.size());
}

DiffusionSchedule RunConfig::make_schedule() const {
    return DiffusionSchedule::make(schedule.kind, schedule.steps);
}

MotionModelConfig RunConfig::motion_config() const {
    MotionModelConfig m;
    m.width = motion.width;
    m.heads = motion.heads;
    m.layers = motion.layers;
    m.mlp_mult = motion.mlp_mult;
    m.mel_bins = motion.mel_bins;
    m.lambda_temp_expr = motion.lambda_temp_expr;
    m.lambda_temp_pose = motion.lambda_temp_pose;
    m.p_drop = motion.p_drop;
    m.predict_residual = motion.predict_residual;
    m.max_frames = motion.max_frames;
    return m;
}

VideoModelConfig RunConfig::video_config() const {
    VideoModelConfig v;
    v.resolution = data.resolution;
    v.base_channels = video.base_channels;
    v.temb_dim = video.temb_dim;
    v.groups = video.groups;
    v.attn_heads = video.attn_heads;
    v.temporal_kernel = video.temporal_kernel;
    v.mode = control_mode_from_name(video.mode);
    return v;
}

MotionTrainOptions RunConfig::motion_train_options() const {
    MotionTrainOptions o;
    o.steps = motion.train_steps;
    o.batch = motion.batch;
    o.lr = motion.lr;
    o.seed = data.seed;
    o.min_clip = motion.min_clip;
    o.max_clip = motion.max_clip;
    return o;
}

}  // namespace vlogdesk
