import type { PluginPayload, SkillData } from "./types.js";

/**
 * An interactive card for a machine-generated action awaiting human
 * approval. The user can edit each query, include/exclude queries, and pick
 * the execution target; `buildSkillData` produces exactly what the backend
 * executor skill will receive.
 */
export interface PluginCard {
  readonly kind: string;
  readonly readOnly: boolean;
  buildSkillData(): SkillData;
}

interface QueryEntry {
  text: string;
  checked: boolean;
}

export class QueryPluginCard implements PluginCard {
  readonly kind: string;
  readonly readOnly = false;
  readonly targets: string[];
  target: string;
  private entries: QueryEntry[];

  constructor(payload: PluginPayload) {
    this.kind = payload.kind;
    this.targets = [...payload.targets];
    this.target = this.targets[0] ?? "default";
    this.entries = payload.queries.map((text) => ({ text, checked: true }));
  }

  get queries(): readonly QueryEntry[] {
    return this.entries;
  }

  editQuery(index: number, text: string): void {
    this.entry(index).text = text;
  }

  setChecked(index: number, checked: boolean): void {
    this.entry(index).checked = checked;
  }

  selectTarget(target: string): void {
    if (!this.targets.includes(target)) {
      throw new Error(`unknown target: ${target}`);
    }
    this.target = target;
  }

  /** The approved action, verbatim as edited; unchecked queries excluded. */
  buildSkillData(): SkillData {
    const queries = this.entries.filter((e) => e.checked).map((e) => e.text);
    if (queries.length === 0) {
      throw new Error("at least one query must be selected");
    }
    return { kind: this.kind, payload: { queries, target: this.target } };
  }

  private entry(index: number): QueryEntry {
    const entry = this.entries[index];
    if (!entry) throw new Error(`no query at index ${index}`);
    return entry;
  }
}

/** Fallback for plugin kinds this client has no editor for. */
export class ReadOnlyCard implements PluginCard {
  readonly readOnly = true;
  constructor(
    readonly kind: string,
    readonly payload: PluginPayload,
  ) {}

  buildSkillData(): SkillData {
    throw new Error(`plugin kind ${this.kind} is read-only`);
  }
}

type CardFactory = (payload: PluginPayload) => PluginCard;

/** Registry keyed by the plugin kind string carried in plugin payloads. */
export class PluginRegistry {
  private factories = new Map<string, CardFactory>();

  register(kind: string, factory: CardFactory): void {
    this.factories.set(kind, factory);
  }

  create(payload: PluginPayload): PluginCard {
    const factory = this.factories.get(payload.kind);
    return factory ? factory(payload) : new ReadOnlyCard(payload.kind, payload);
  }
}
