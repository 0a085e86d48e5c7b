// Schema-driven configuration forms.
//
// The form is rendered purely from the server's form descriptor: leaf items
// (those nobody subclasses) contribute their inherited field lists, so every
// descriptor field shows up exactly once. Server-side validation errors are
// annotated at their config paths; defaults returned by the server are
// merged without clobbering anything the user already edited.

import type { ApiErrorEnvelope } from "./api.js";

export interface FieldDescriptor {
  name: string;
  kind: string;
  required: boolean;
  default: unknown;
  choice_point?: string;
  choices?: { value: string; label: string }[];
  ref_item?: string;
}

export interface ItemDescriptor {
  name: string;
  registry_id: string;
  parent: string | null;
  multiplicity: "one" | "many";
  audience: string | null;
  fields: FieldDescriptor[];
}

export interface FormDescriptor {
  point: string;
  context: Record<string, string>;
  items: ItemDescriptor[];
}

export type Instance = { _item?: string } & Record<string, unknown>;
export type ConfigDocument = Record<string, Instance[]>;

export interface FormModel {
  descriptor: FormDescriptor;
  config: ConfigDocument;
  dirty: Set<string>; // config paths like "core.interfaces.0.channel"
  errors: Map<string, string[]>; // config path -> messages ("" = form level)
  banner: string | null; // network failures surface here, state preserved
}

export function buildFormModel(descriptor: FormDescriptor, config: ConfigDocument): FormModel {
  return {
    descriptor,
    config: structuredClone(config),
    dirty: new Set(),
    errors: new Map(),
    banner: null,
  };
}

/** Items that no other item subclasses; these carry the full field sets. */
export function leafItems(descriptor: FormDescriptor): ItemDescriptor[] {
  const parents = new Set(
    descriptor.items.map((i) => i.parent).filter((p): p is string => p !== null),
  );
  return descriptor.items.filter((i) => !parents.has(i.name));
}

export interface Control {
  path: string; // config path of the bound value
  registryId: string;
  instanceIndex: number;
  item: string;
  field: FieldDescriptor;
  value: unknown;
  errors: string[];
}

/**
 * Flat control list mirroring the descriptor: one control per field of every
 * instance, plus an empty slot row for one-to-one items not yet present.
 */
export function formControls(model: FormModel): Control[] {
  const controls: Control[] = [];
  for (const item of leafItems(model.descriptor)) {
    const instances = instancesOf(model.config, item);
    const slots: Instance[] =
      instances.length === 0 && item.multiplicity === "one" ? [{ _item: item.name }] : [];
    for (const [index, instance] of [...instances, ...slots.map((s) => s)].entries()) {
      for (const field of item.fields) {
        const path = `${item.registry_id}.${index}.${field.name}`;
        controls.push({
          path,
          registryId: item.registry_id,
          instanceIndex: index,
          item: item.name,
          field,
          value: instance[field.name] ?? null,
          errors: model.errors.get(path) ?? [],
        });
      }
    }
  }
  return controls;
}

function instancesOf(config: ConfigDocument, item: ItemDescriptor): Instance[] {
  const instances = config[item.registry_id] ?? [];
  return instances.filter((i) => (i._item ?? item.name) === item.name);
}

export function setField(model: FormModel, path: string, value: unknown): void {
  const [registryId, index, field] = splitPath(model.descriptor, path);
  const list = (model.config[registryId] ??= []);
  while (list.length <= index) {
    list.push({});
  }
  list[index][field] = value;
  model.dirty.add(path);
}

function splitPath(descriptor: FormDescriptor, path: string): [string, number, string] {
  // registry ids may contain dots; match the longest known prefix
  const ids = [...new Set(descriptor.items.map((i) => i.registry_id))].sort(
    (a, b) => b.length - a.length,
  );
  for (const id of ids) {
    if (path.startsWith(id + ".")) {
      const rest = path.slice(id.length + 1).split(".");
      return [id, Number(rest[0]), rest.slice(1).join(".")];
    }
  }
  const parts = path.split(".");
  return [parts[0], Number(parts[1]), parts.slice(2).join(".")];
}

/**
 * Merge a server round-trip result (defaults applied) into the form without
 * clobbering fields the user edited since.
 */
export function mergeDefaults(model: FormModel, serverConfig: ConfigDocument): void {
  const preserved: [string, unknown][] = [];
  for (const path of model.dirty) {
    const [registryId, index, field] = splitPath(model.descriptor, path);
    const instance = model.config[registryId]?.[index];
    if (instance && field in instance) {
      preserved.push([path, instance[field]]);
    }
  }
  model.config = structuredClone(serverConfig);
  for (const [path, value] of preserved) {
    const [registryId, index, field] = splitPath(model.descriptor, path);
    const list = (model.config[registryId] ??= []);
    while (list.length <= index) {
      list.push({});
    }
    list[index][field] = value;
  }
}

/** Annotate server-reported errors at their config paths; keep form state. */
export function applyServerErrors(model: FormModel, envelope: ApiErrorEnvelope): void {
  model.errors = new Map();
  for (const detail of envelope.error.details) {
    const key = detail.path ?? "";
    const bucket = model.errors.get(key) ?? [];
    const prefix = detail.module ? `[${detail.module}] ` : "";
    bucket.push(prefix + detail.message);
    model.errors.set(key, bucket);
  }
  if (model.errors.size === 0) {
    model.errors.set("", [envelope.error.message]);
  }
}

export function clearErrors(model: FormModel): void {
  model.errors = new Map();
  model.banner = null;
}

/** Paths whose annotations found no rendered control (shown form-level). */
export function unanchoredErrors(model: FormModel, controls: Control[]): string[] {
  const anchored = new Set(controls.map((c) => c.path));
  const out: string[] = [];
  for (const [path, messages] of model.errors) {
    if (path === "" || !anchored.has(path)) {
      out.push(...messages);
    }
  }
  return out;
}
